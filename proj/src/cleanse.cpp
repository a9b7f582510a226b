#include "fincurate/cleanse.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace fincurate::cleanse {

const char * tier_name(Tier t) {
    switch (t) {
        case Tier::High:   return "high";
        case Tier::Medium: return "medium";
        case Tier::Low:    return "low";
    }
    return "medium";
}

const char * drop_reason_name(DropReason r) {
    switch (r) {
        case DropReason::TooShort: return "too_short";
        case DropReason::Noisy:    return "noisy";
        case DropReason::LowInfo:  return "low_info";
    }
    return "too_short";
}

void CleansePolicy::validate() const {
    if (min_word_count < 1) {
        throw config_error("cleanse: min_word_count must be >= 1");
    }
    if (!(max_symbol_ratio >= 0.0 && max_symbol_ratio <= 1.0)) {
        throw config_error("cleanse: max_symbol_ratio must be in [0,1]");
    }
    if (!(max_repetition_ratio >= 0.0 && max_repetition_ratio <= 1.0)) {
        throw config_error("cleanse: max_repetition_ratio must be in [0,1]");
    }
    if (!(tier_low_cut >= 0.0 && tier_low_cut < tier_high_cut && tier_high_cut <= 1.0)) {
        throw config_error("cleanse: tier cuts must satisfy 0 <= low_cut < high_cut <= 1");
    }
    for (const auto & rule : pii_rules) {
        if (rule.placeholder.empty()) {
            throw config_error("cleanse: pii rule '" + rule.name + "' has empty placeholder");
        }
        if (rule.placeholder.find_first_of("0123456789") != std::string::npos) {
            throw config_error("cleanse: pii rule '" + rule.name + "' placeholder contains digits");
        }
        try {
            std::regex re(rule.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error & e) {
            throw config_error("cleanse: pii rule '" + rule.name + "' bad pattern: " + e.what());
        }
    }
}

CleansePolicy CleansePolicy::defaults() {
    CleansePolicy p;
    // Digit-run rules carry a (?![0-9]) guard so a run longer than the rule's
    // width is never split; 10-digit runs resolve to phone, the rest of the
    // 9-18 range to account numbers. UPI handles run after emails so a
    // dotted domain never matches the handle shape.
    p.pii_rules = {
        {"email", R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})", "[EMAIL]"},
        {"upi_handle", R"([A-Za-z0-9._-]+@[A-Za-z]+(?![A-Za-z.]))", "[UPI]"},
        {"account_number", R"([0-9]{11,18}(?![0-9]))", "[ACCOUNT]"},
        {"phone", R"((\+91[ -]?)?[0-9]{10}(?![0-9]))", "[PHONE]"},
        {"account_number_short", R"([0-9]{9}(?![0-9]))", "[ACCOUNT]"},
    };
    return p;
}

std::string normalize(const std::string & text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    bool seen_nonspace = false;
    const auto * p = reinterpret_cast<const unsigned char *>(text.data());
    std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char c = p[i];
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = seen_nonspace;
            continue;
        }
        if (c < 0x20 || c == 0x7F) {
            continue; // remaining C0 controls and DEL
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(c));
        seen_nonspace = true;
    }
    return out;
}

std::size_t word_count(const std::string & normalized) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : normalized) {
        if (c == ' ') {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

static std::vector<std::string> split_words(const std::string & normalized) {
    std::vector<std::string> words;
    std::size_t start = 0;
    while (start < normalized.size()) {
        std::size_t end = normalized.find(' ', start);
        if (end == std::string::npos) {
            end = normalized.size();
        }
        if (end > start) {
            words.push_back(normalized.substr(start, end - start));
        }
        start = end + 1;
    }
    return words;
}

double symbol_ratio(const std::string & normalized) {
    std::size_t symbols = 0;
    std::size_t total = 0;
    const auto * p = reinterpret_cast<const unsigned char *>(normalized.data());
    std::size_t n = normalized.size();
    for (std::size_t i = 0; i < n;) {
        unsigned char c = p[i];
        if (c < 0x80) {
            if (c != ' ') {
                ++total;
                if (!std::isalnum(c)) {
                    ++symbols;
                }
            }
            ++i;
        } else {
            // one non-ASCII code point; counts as a letter, never a symbol
            ++total;
            std::size_t len = (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : 4;
            i += len;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(symbols) / static_cast<double>(total);
}

double repetition_ratio(const std::string & normalized) {
    auto words = split_words(normalized);
    if (words.size() < 3) {
        return 0.0;
    }
    std::unordered_map<std::string, std::size_t> trigrams;
    std::size_t best = 0;
    for (std::size_t i = 0; i + 2 < words.size(); ++i) {
        std::string key = words[i] + '\x01' + words[i + 1] + '\x01' + words[i + 2];
        best = std::max(best, ++trigrams[key]);
    }
    std::size_t positions = words.size() - 2;
    return static_cast<double>(best) / static_cast<double>(positions);
}

std::optional<DropReason> rule_filter(const ingest::TextRecord & doc, const CleansePolicy & policy) {
    const std::string & text = doc.text;
    if (word_count(text) < policy.min_word_count) {
        return DropReason::TooShort;
    }
    if (symbol_ratio(text) > policy.max_symbol_ratio) {
        return DropReason::Noisy;
    }
    if (repetition_ratio(text) > policy.max_repetition_ratio) {
        return DropReason::LowInfo;
    }
    return std::nullopt;
}

RedactionResult anonymize_pii(const std::string & text, const std::vector<PiiRule> & rules) {
    RedactionResult result{text, 0};
    for (const auto & rule : rules) {
        std::regex re(rule.pattern, std::regex::ECMAScript);
        std::string next;
        next.reserve(result.text.size());
        auto begin = std::sregex_iterator(result.text.begin(), result.text.end(), re);
        auto end = std::sregex_iterator();
        std::size_t last = 0;
        for (auto it = begin; it != end; ++it) {
            const auto & m = *it;
            next.append(result.text, last, static_cast<std::size_t>(m.position()) - last);
            next.append(rule.placeholder);
            last = static_cast<std::size_t>(m.position() + m.length());
            ++result.count;
        }
        next.append(result.text, last, result.text.size() - last);
        result.text = std::move(next);
    }
    return result;
}

static const std::unordered_set<std::string> & stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",    "an",   "the",  "and",  "or",    "but",  "if",    "of",   "at",   "by",    "for",  "with",
        "to",   "from", "in",   "on",   "is",    "are",  "was",   "were", "be",   "been",  "as",   "it",
        "its",  "this", "that", "these","those", "he",   "she",   "they", "we",   "you",   "i",    "his",
        "her",  "their","our",  "your", "not",   "no",   "has",   "have", "had",  "do",    "does", "did",
        "will", "would","can",  "could","should","which","who",   "whom", "what", "when",  "where","why",
        "how",  "than", "then", "there","here",  "all",  "any",   "each", "more", "most",  "some", "such",
        "only", "also", "into", "over", "under", "about","after", "before","between","during","through","per",
    };
    return words;
}

static std::string lower_ascii(std::string s) {
    for (char & c : s) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

static std::string strip_punct(const std::string & w) {
    std::size_t b = 0;
    std::size_t e = w.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
    return w.substr(b, e - b);
}

double quality_score(const std::string & normalized) {
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

    double f_symbol = clamp01(1.0 - symbol_ratio(normalized) / 0.4);
    double f_repeat = clamp01(1.0 - repetition_ratio(normalized) / 0.3);

    // mean sentence length in words, triangular score peaking at 20
    auto words = split_words(normalized);
    std::size_t sentences = 0;
    for (char c : normalized) {
        if (c == '.' || c == '!' || c == '?') {
            ++sentences;
        }
    }
    if (sentences == 0) {
        sentences = 1;
    }
    double mean_len = words.empty() ? 0.0 : static_cast<double>(words.size()) / static_cast<double>(sentences);
    double f_sentence = mean_len <= 20.0 ? clamp01(mean_len / 20.0) : clamp01((60.0 - mean_len) / 40.0);

    std::size_t stop = 0;
    for (const auto & w : words) {
        if (stopwords().count(lower_ascii(strip_punct(w)))) {
            ++stop;
        }
    }
    double stop_frac = words.empty() ? 0.0 : static_cast<double>(stop) / static_cast<double>(words.size());
    double f_stop = clamp01(1.0 - std::fabs(stop_frac - 0.4) / 0.4);

    return (f_symbol + f_repeat + f_sentence + f_stop) / 4.0;
}

Tier quality_tier(const ingest::TextRecord & doc, const CleansePolicy & policy) {
    double score = quality_score(doc.text);
    if (score >= policy.tier_high_cut) {
        return Tier::High;
    }
    if (score < policy.tier_low_cut) {
        return Tier::Low;
    }
    return Tier::Medium;
}

CuratedDocument cleanse_document(std::string id, ingest::TextRecord record, const CleansePolicy & policy) {
    CuratedDocument doc;
    doc.id = std::move(id);
    record.text = normalize(record.text);
    doc.drop_reason = rule_filter(record, policy);
    if (!doc.drop_reason) {
        auto redacted = anonymize_pii(record.text, policy.pii_rules);
        record.text = std::move(redacted.text);
        doc.pii_redactions = redacted.count;
        doc.tier = quality_tier(record, policy);
    }
    doc.record = std::move(record);
    return doc;
}

} // namespace fincurate::cleanse
