#include "fincurate/evalsuite.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace fincurate::evalsuite {

void TokenDistribution::validate() const {
    if (probs.empty()) {
        throw data_error("token distribution: empty vocabulary");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p > 0.0)) {
            throw data_error("token distribution: non-positive probability");
        }
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw data_error("token distribution: probabilities sum to " + std::to_string(sum));
    }
}

double token_kl(const TokenDistribution & p, const TokenDistribution & q) {
    if (p.probs.size() != q.probs.size()) {
        throw data_error("token_kl: vocabulary size mismatch");
    }
    p.validate();
    q.validate();
    double sum = 0.0;
    for (std::size_t w = 0; w < p.probs.size(); ++w) {
        sum += p.probs[w] * (std::log(p.probs[w]) - std::log(q.probs[w]));
    }
    // Gibbs: true value is >= 0; clip float dust on the p ~= q diagonal.
    return sum < 0.0 && sum > -1e-12 ? 0.0 : sum;
}

double corpus_kl(const std::vector<std::vector<AlignedPositional>> & sequences) {
    if (sequences.empty()) {
        throw data_error("corpus_kl: empty corpus");
    }
    double seq_sum = 0.0;
    for (const auto & seq : sequences) {
        if (seq.empty()) {
            throw data_error("corpus_kl: empty sequence");
        }
        double pos_sum = 0.0;
        for (const auto & pos : seq) {
            pos_sum += token_kl(pos.dist_cpt, pos.dist_base);
        }
        seq_sum += pos_sum / static_cast<double>(seq.size());
    }
    return seq_sum / static_cast<double>(sequences.size());
}

void LogProbSequence::validate() const {
    if (logprobs.empty()) {
        throw data_error("logprob sequence: empty");
    }
    for (double lp : logprobs) {
        if (lp > 0.0) {
            throw data_error("logprob sequence: positive log probability");
        }
    }
}

double perplexity(const LogProbSequence & seq) {
    seq.validate();
    double sum = 0.0;
    for (double lp : seq.logprobs) {
        sum += lp;
    }
    return std::exp(-sum / static_cast<double>(seq.logprobs.size()));
}

double pooled_perplexity(const std::vector<LogProbSequence> & seqs) {
    if (seqs.empty()) {
        throw data_error("pooled perplexity: no sequences");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto & seq : seqs) {
        seq.validate();
        for (double lp : seq.logprobs) {
            sum += lp;
        }
        n += seq.logprobs.size();
    }
    return std::exp(-sum / static_cast<double>(n));
}

DriftStatus drift_guard(double kl_avg, double threshold) {
    if (kl_avg < 0.0) {
        throw data_error("drift_guard: negative KL average");
    }
    return kl_avg >= threshold ? DriftStatus::Warn : DriftStatus::Ok;
}

double ToolCallScore::precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ToolCallScore::recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double ToolCallScore::f1() const {
    if (no_support) {
        return 1.0;
    }
    double p = precision();
    double r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

namespace {

struct CallKey {
    std::string tool;
    std::string args;
    bool operator<(const CallKey & other) const {
        return tool != other.tool ? tool < other.tool : args < other.args;
    }
    bool operator==(const CallKey &) const = default;
};

std::vector<CallKey> calls_of_turn(const conversation::Message & msg) {
    std::vector<CallKey> out;
    for (const auto & call : msg.tool_calls) {
        out.push_back({call.function_name, conversation::canonical_json(call.arguments_json)});
    }
    return out;
}

std::vector<std::vector<CallKey>> assistant_turns(const conversation::ConversationSample & sample) {
    std::vector<std::vector<CallKey>> turns;
    for (const auto & msg : sample.messages) {
        if (msg.role == conversation::Role::Assistant) {
            turns.push_back(calls_of_turn(msg));
        }
    }
    return turns;
}

} // namespace

std::vector<ToolCallScore> tool_call_f1(const std::vector<conversation::ConversationSample> & predicted,
                                        const std::vector<conversation::ConversationSample> & gold,
                                        const std::vector<std::string> & registry_tools) {
    if (predicted.size() != gold.size()) {
        throw data_error("tool_call_f1: sample count mismatch");
    }
    std::map<std::pair<std::string, conversation::Language>, ToolCallScore> table;
    auto slot = [&](const std::string & tool, conversation::Language lang) -> ToolCallScore & {
        auto key = std::make_pair(tool, lang);
        auto it = table.find(key);
        if (it == table.end()) {
            it = table.emplace(key, ToolCallScore{tool, lang, 0, 0, 0, false}).first;
        }
        return it->second;
    };

    std::set<conversation::Language> languages_seen;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i].id != gold[i].id) {
            throw data_error("tool_call_f1: sample id mismatch at index " + std::to_string(i) + " (\"" +
                             predicted[i].id + "\" vs \"" + gold[i].id + "\")");
        }
        conversation::Language lang = gold[i].language;
        languages_seen.insert(lang);
        auto pred_turns = assistant_turns(predicted[i]);
        auto gold_turns = assistant_turns(gold[i]);
        std::size_t turns = std::max(pred_turns.size(), gold_turns.size());
        for (std::size_t t = 0; t < turns; ++t) {
            std::vector<CallKey> pred = t < pred_turns.size() ? pred_turns[t] : std::vector<CallKey>{};
            std::vector<CallKey> gld = t < gold_turns.size() ? gold_turns[t] : std::vector<CallKey>{};
            // multiset matching: each gold call consumes at most one
            // identical predicted call
            std::vector<bool> used(pred.size(), false);
            for (const auto & g : gld) {
                bool matched = false;
                for (std::size_t k = 0; k < pred.size(); ++k) {
                    if (!used[k] && pred[k] == g) {
                        used[k] = true;
                        matched = true;
                        break;
                    }
                }
                if (matched) {
                    slot(g.tool, lang).tp += 1;
                } else {
                    slot(g.tool, lang).fn += 1;
                }
            }
            for (std::size_t k = 0; k < pred.size(); ++k) {
                if (!used[k]) {
                    slot(pred[k].tool, lang).fp += 1;
                }
            }
        }
    }

    for (const auto & tool : registry_tools) {
        for (auto lang : languages_seen) {
            auto key = std::make_pair(tool, lang);
            if (!table.count(key)) {
                table.emplace(key, ToolCallScore{tool, lang, 0, 0, 0, true});
            }
        }
    }

    std::vector<ToolCallScore> scores;
    scores.reserve(table.size());
    for (auto & [key, score] : table) {
        scores.push_back(score);
    }
    return scores;
}

std::string tool_call_report_csv(const std::vector<ToolCallScore> & scores) {
    std::ostringstream out;
    out << "tool,language,tp,fp,fn,precision,recall,f1,no_support\n";
    char buf[64];
    for (const auto & s : scores) {
        out << s.tool << ',' << conversation::language_name(s.language) << ',' << s.tp << ',' << s.fp << ',' << s.fn;
        std::snprintf(buf, sizeof(buf), ",%.4f,%.4f,%.4f,", s.precision(), s.recall(), s.f1());
        out << buf << (s.no_support ? "true" : "false") << '\n';
    }
    return out.str();
}

const char * difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::Low:    return "low";
        case Difficulty::Medium: return "medium";
        case Difficulty::High:   return "high";
    }
    return "medium";
}

const char * question_type_name(QuestionType q) {
    switch (q) {
        case QuestionType::Knowledge: return "knowledge";
        case QuestionType::Reasoning: return "reasoning";
        case QuestionType::Hybrid:    return "hybrid";
    }
    return "knowledge";
}

const char * bloom_name(BloomLevel b) {
    switch (b) {
        case BloomLevel::Remember:   return "remember";
        case BloomLevel::Understand: return "understand";
        case BloomLevel::Apply:      return "apply";
        case BloomLevel::Analyse:    return "analyse";
        case BloomLevel::Evaluate:   return "evaluate";
        case BloomLevel::Create:     return "create";
    }
    return "remember";
}

const char * word_band_name(WordBand w) {
    switch (w) {
        case WordBand::Short:  return "short";
        case WordBand::Medium: return "medium";
        case WordBand::Long:   return "long";
    }
    return "short";
}

const char * distractor_name(DistractorQuality d) {
    switch (d) {
        case DistractorQuality::Low:    return "low";
        case DistractorQuality::Medium: return "medium";
        case DistractorQuality::High:   return "high";
    }
    return "medium";
}

static std::size_t count_words(const std::string & text) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n') {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

WordBand word_band_of(const std::string & stem) {
    std::size_t words = count_words(stem);
    if (words < 25) {
        return WordBand::Short;
    }
    if (words <= 50) {
        return WordBand::Medium;
    }
    return WordBand::Long;
}

QuestionProfile RuleQuestionClassifier::classify(const std::string & stem, const std::vector<std::string> & options) {
    QuestionProfile profile;
    std::string lower = stem;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

    bool numeric = lower.find_first_of("0123456789") != std::string::npos;
    bool why_how = lower.find("why") != std::string::npos || lower.find("how") != std::string::npos;
    bool compute = lower.find("calculate") != std::string::npos || lower.find("compute") != std::string::npos;

    if (compute || (numeric && why_how)) {
        profile.qtype = QuestionType::Reasoning;
        profile.bloom = BloomLevel::Apply;
        profile.difficulty = Difficulty::High;
    } else if (why_how || numeric) {
        profile.qtype = QuestionType::Hybrid;
        profile.bloom = why_how ? BloomLevel::Understand : BloomLevel::Apply;
        profile.difficulty = Difficulty::Medium;
    } else {
        profile.qtype = QuestionType::Knowledge;
        profile.bloom = BloomLevel::Remember;
        profile.difficulty = count_words(stem) >= 25 ? Difficulty::Medium : Difficulty::Low;
    }

    if (lower.find("define") != std::string::npos || lower.find("what is") != std::string::npos) {
        profile.category = "definition_type";
    } else if (numeric) {
        profile.category = "numericals";
    } else if (!lower.empty() && lower.back() != '?') {
        profile.category = "sentence_completion";
    } else {
        profile.category = "conceptual_based";
    }

    // distractor similarity by shared-prefix heuristic over options
    std::size_t shares = 0;
    for (std::size_t i = 0; i + 1 < options.size(); ++i) {
        for (std::size_t k = i + 1; k < options.size(); ++k) {
            const auto & a = options[i];
            const auto & b = options[k];
            std::size_t common = 0;
            while (common < a.size() && common < b.size() && a[common] == b[common]) {
                ++common;
            }
            if (common >= 4) {
                ++shares;
            }
        }
    }
    profile.distractor_quality =
        shares >= 4 ? DistractorQuality::High : shares >= 1 ? DistractorQuality::Medium : DistractorQuality::Low;
    profile.ambiguity = std::min(1.0, 0.1 + 0.1 * static_cast<double>(shares));
    return profile;
}

QuestionProfile profile_question(const std::string & stem, const std::vector<std::string> & options,
                                 QuestionClassifier & classifier) {
    if (options.size() != 4) {
        throw data_error("profile_question: exactly 4 options required");
    }
    QuestionProfile profile = classifier.classify(stem, options);
    profile.word_band = word_band_of(stem); // rule axis always wins
    return profile;
}

std::vector<DistributionRow> distribution_report(const std::vector<QuestionProfile> & profiles) {
    std::vector<DistributionRow> rows;
    auto add_axis = [&](const std::string & axis, const std::map<std::string, std::size_t> & counts) {
        for (const auto & [value, count] : counts) {
            DistributionRow row;
            row.category = axis + ": " + value;
            row.count = count;
            row.percentage =
                profiles.empty() ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(profiles.size());
            rows.push_back(std::move(row));
        }
    };

    std::map<std::string, std::size_t> difficulty, qtype, bloom, band, distractor, category;
    for (const auto & p : profiles) {
        ++difficulty[difficulty_name(p.difficulty)];
        ++qtype[question_type_name(p.qtype)];
        ++bloom[bloom_name(p.bloom)];
        ++band[word_band_name(p.word_band)];
        ++distractor[distractor_name(p.distractor_quality)];
        if (!p.category.empty()) {
            ++category[p.category];
        }
    }
    add_axis("difficulty", difficulty);
    add_axis("type", qtype);
    add_axis("bloom", bloom);
    add_axis("word_band", band);
    add_axis("distractor_quality", distractor);
    add_axis("question_category", category);
    return rows;
}

std::string distribution_report_text(const std::vector<DistributionRow> & rows) {
    std::size_t width = 8;
    for (const auto & r : rows) {
        width = std::max(width, r.category.size());
    }
    std::ostringstream out;
    char buf[64];
    for (const auto & r : rows) {
        std::snprintf(buf, sizeof(buf), "%8zu  %6.2f%%", r.count, r.percentage);
        out << r.category << std::string(width - r.category.size() + 2, ' ') << buf << '\n';
    }
    return out.str();
}

} // namespace fincurate::evalsuite
