#include "fincurate/judge.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace fincurate::judge {

using json = nlohmann::ordered_json;

void MetricTaxonomy::validate() const {
    if (pillars.size() != 4) {
        throw config_error("taxonomy: exactly 4 pillars required, got " + std::to_string(pillars.size()));
    }
    static const std::size_t expected[4] = {5, 5, 6, 4};
    std::size_t total = 0;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < pillars.size(); ++i) {
        if (pillars[i].metrics.size() != expected[i]) {
            throw config_error("taxonomy: pillar \"" + pillars[i].name + "\" must carry " +
                               std::to_string(expected[i]) + " metrics, got " +
                               std::to_string(pillars[i].metrics.size()));
        }
        for (const auto & m : pillars[i].metrics) {
            if (m.id.empty() || !ids.insert(m.id).second) {
                throw config_error("taxonomy: duplicate or empty metric id \"" + m.id + "\"");
            }
            ++total;
        }
    }
    if (total != 20) {
        throw config_error("taxonomy: expected 20 metrics, got " + std::to_string(total));
    }
}

const Metric * MetricTaxonomy::find(const std::string & metric_id) const {
    for (const auto & p : pillars) {
        for (const auto & m : p.metrics) {
            if (m.id == metric_id) {
                return &m;
            }
        }
    }
    return nullptr;
}

std::vector<const Metric *> MetricTaxonomy::all_metrics() const {
    std::vector<const Metric *> out;
    for (const auto & p : pillars) {
        for (const auto & m : p.metrics) {
            out.push_back(&m);
        }
    }
    return out;
}

std::map<std::string, std::size_t> MetricTaxonomy::pillar_of() const {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < pillars.size(); ++i) {
        for (const auto & m : pillars[i].metrics) {
            out[m.id] = i;
        }
    }
    return out;
}

MetricTaxonomy MetricTaxonomy::from_json(const std::string & json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.contains("pillars")) {
        throw config_error("taxonomy: malformed JSON");
    }
    MetricTaxonomy tax;
    for (const auto & jp : j["pillars"]) {
        Pillar p;
        p.name = jp.at("name").get<std::string>();
        for (const auto & jm : jp.at("metrics")) {
            Metric m;
            m.id = jm.at("id").get<std::string>();
            m.name = jm.at("name").get<std::string>();
            m.prompt_template = jm.value("prompt", "");
            p.metrics.push_back(std::move(m));
        }
        tax.pillars.push_back(std::move(p));
    }
    tax.validate();
    return tax;
}

std::string MetricTaxonomy::to_json() const {
    json jp = json::array();
    for (const auto & p : pillars) {
        json jm = json::array();
        for (const auto & m : p.metrics) {
            jm.push_back({{"id", m.id}, {"name", m.name}, {"prompt", m.prompt_template}});
        }
        jp.push_back({{"name", p.name}, {"metrics", jm}});
    }
    return json({{"pillars", jp}}).dump(2);
}

MetricTaxonomy MetricTaxonomy::defaults() {
    auto metric = [](const char * id, const char * name, const char * question) {
        Metric m;
        m.id = id;
        m.name = name;
        m.prompt_template = std::string("Judge the conversation below on one criterion: ") + question +
                            " Answer exactly 1 (acceptable), 0 (unacceptable) or NA (not applicable).\n\n"
                            "{{conversation}}";
        return m;
    };
    MetricTaxonomy tax;
    tax.pillars = {
        {"Domain Fidelity & Compliance",
         {
             metric("factuality", "Factuality", "Does every claim align with ground truth and official rules?"),
             metric("consistency", "Consistency", "Does the assistant adhere to its defined persona and guidelines?"),
             metric("no_tool_free_claims", "Information Provided Without Tool Call",
                    "Are state-dependent assertions always backed by a tool call?"),
             metric("neutrality", "Neutrality & Non-Promotional Conduct",
                    "Is the assistant unbiased and non-promotional?"),
             metric("no_blame", "Blame & Negative Framing",
                    "Is the conduct professional and constructive, without blaming?"),
         }},
        {"Functional Competency",
         {
             metric("tool_selection", "Tool Selection & Execution Accuracy",
                    "Are the chosen tools and their sequencing logical?"),
             metric("tool_arguments", "Tool Argument Validity",
                    "Are tool inputs structurally valid (ids, formats)?"),
             metric("info_gathering", "Information Gathering Precision",
                    "Are required parameters collected efficiently?"),
             metric("result_presentation", "Tool Result Accuracy & Presentation",
                    "Are tool outputs summarized without distortion?"),
             metric("date_filtering", "Date & Filtering Correctness",
                    "Are temporal queries and filters handled correctly?"),
         }},
        {"Interaction Quality & Flow",
         {
             metric("coherence", "Coherence", "Does the dialogue progress logically?"),
             metric("relevance", "Relevance", "Is the content free of filler?"),
             metric("clarity", "Clarity", "Is the language concise and jargon-free?"),
             metric("language_tone", "Language & Tone", "Are grammar and demeanor professional?"),
             metric("conciseness", "Conciseness", "Are responses brief and direct?"),
             metric("conversational_flow", "Conversational Flow", "Is context tracked across turns?"),
         }},
        {"Resolution & Recovery",
         {
             metric("task_completion", "Task Completion", "Was the user's intent resolved?"),
             metric("user_guidance", "User Guidance & Follow-up", "Are next steps navigable?"),
             metric("disambiguation", "Disambiguation Handling", "Are ambiguous requests clarified proactively?"),
             metric("error_handling", "Error Handling & Escalation", "Are failures handled robustly?"),
         }},
    };
    tax.validate();
    return tax;
}

const char * metric_value_name(MetricValue v) {
    switch (v) {
        case MetricValue::Pass:          return "1";
        case MetricValue::Fail:          return "0";
        case MetricValue::NotApplicable: return "NA";
    }
    return "NA";
}

static std::optional<MetricValue> parse_ternary(const std::string & raw) {
    std::string trimmed;
    for (char c : raw) {
        if (!std::isspace(static_cast<unsigned char>(c))) {
            trimmed += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
    }
    if (trimmed == "1") return MetricValue::Pass;
    if (trimmed == "0") return MetricValue::Fail;
    if (trimmed == "NA") return MetricValue::NotApplicable;
    return std::nullopt;
}

static std::string expand_template(const std::string & tmpl, const std::string & conversation_text) {
    const std::string token = "{{conversation}}";
    auto pos = tmpl.find(token);
    if (pos == std::string::npos) {
        return tmpl + "\n\n" + conversation_text;
    }
    std::string out = tmpl;
    out.replace(pos, token.size(), conversation_text);
    return out;
}

Verdict judge_sample(const conversation::ConversationSample & sample, const MetricTaxonomy & taxonomy,
                     const conversation::ToolRegistry & registry, llmgate::ChatClient & chat) {
    taxonomy.validate();
    std::string rendered = conversation::render_chat_template(sample, registry);

    Verdict verdict;
    verdict.sample_id = sample.id;
    for (const Metric * metric : taxonomy.all_metrics()) {
        std::string prompt = expand_template(metric->prompt_template, rendered);
        std::string raw = chat.complete("You are a strict data-quality judge for financial support dialogues.", prompt);
        auto value = parse_ternary(raw);
        if (!value) {
            raw = chat.complete("You are a strict data-quality judge for financial support dialogues.",
                                prompt + "\n\nAnswer with exactly one of: 1, 0, NA.");
            value = parse_ternary(raw);
        }
        if (!value) {
            verdict.metrics[metric->id] = MetricValue::NotApplicable;
            verdict.audit_flags.push_back(metric->id + ": unparseable judge output");
        } else {
            verdict.metrics[metric->id] = *value;
        }
        verdict.raw_outputs[metric->id] = raw;
    }
    return verdict;
}

Stage2Result stage2_filter(const std::vector<Verdict> & verdicts, const MetricTaxonomy & taxonomy,
                           const Stage2Policy & policy) {
    taxonomy.validate();
    auto pillar_index = taxonomy.pillar_of();

    Stage2Result result;
    for (const auto & verdict : verdicts) {
        if (verdict.metrics.size() != taxonomy.all_metrics().size()) {
            throw data_error("stage2: verdict for \"" + verdict.sample_id + "\" has " +
                             std::to_string(verdict.metrics.size()) + " metrics, expected " +
                             std::to_string(taxonomy.all_metrics().size()));
        }
        std::vector<std::string> reasons;
        for (const auto & [metric_id, value] : verdict.metrics) {
            auto it = pillar_index.find(metric_id);
            if (it == pillar_index.end()) {
                throw data_error("stage2: verdict carries unknown metric \"" + metric_id + "\"");
            }
            bool rejecting_pillar =
                std::find(policy.rejecting_pillars.begin(), policy.rejecting_pillars.end(), it->second) !=
                policy.rejecting_pillars.end();
            if (rejecting_pillar && value == MetricValue::Fail) {
                reasons.push_back(metric_id);
            }
        }
        if (reasons.empty()) {
            result.accepted_ids.push_back(verdict.sample_id);
        } else {
            for (const auto & metric_id : reasons) {
                ++result.rejection_histogram[metric_id];
            }
            result.rejected.push_back({verdict.sample_id, std::move(reasons)});
        }
    }
    return result;
}

std::string verdicts_jsonl(const std::vector<Verdict> & verdicts, const Stage2Result & result) {
    std::set<std::string> accepted(result.accepted_ids.begin(), result.accepted_ids.end());
    std::map<std::string, const Stage2Rejection *> rejected;
    for (const auto & r : result.rejected) {
        rejected[r.sample_id] = &r;
    }
    std::string out;
    for (const auto & v : verdicts) {
        json j;
        j["sample_id"] = v.sample_id;
        json metrics;
        for (const auto & [id, value] : v.metrics) {
            metrics[id] = metric_value_name(value);
        }
        j["metrics"] = metrics;
        j["accepted"] = accepted.count(v.sample_id) > 0;
        j["reasons"] = json::array();
        if (auto it = rejected.find(v.sample_id); it != rejected.end()) {
            for (const auto & reason : it->second->reasons) {
                j["reasons"].push_back(reason);
            }
        }
        if (!v.audit_flags.empty()) {
            j["audit_flags"] = v.audit_flags;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

void Rubric::validate() const {
    if (scale_min != 1 || scale_max < scale_min) {
        throw config_error("rubric: scale must start at 1");
    }
    if (descriptions.size() != static_cast<std::size_t>(scale_max - scale_min + 1)) {
        throw config_error("rubric \"" + name + "\": need one description per score");
    }
}

Rubric Rubric::from_json(const std::string & json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw config_error("rubric: malformed JSON");
    }
    Rubric r;
    r.name = j.at("name").get<std::string>();
    r.scale_min = j.value("scale_min", 1);
    r.scale_max = j.at("scale_max").get<int>();
    for (const auto & d : j.at("descriptions")) {
        r.descriptions.push_back(d.get<std::string>());
    }
    r.validate();
    return r;
}

Rubric Rubric::coherence() {
    Rubric r;
    r.name = "coherence";
    r.scale_min = 1;
    r.scale_max = 5;
    r.descriptions = {
        "Critical: total context loss, narrative breakdown or responses unrelated to the stated issue.",
        "Poor: significant disruption, irrelevant information requests or ignored user details.",
        "Moderate: partial coherence with skipped steps or minor logic mismatches causing ambiguity.",
        "Good: minor deviations; logic intact despite small wording issues or implicit confirmations.",
        "Excellent: fully coherent, strict adherence to the query, complete context retention, zero filler.",
    };
    return r;
}

static std::optional<int> parse_leading_int(const std::string & raw) {
    std::size_t i = 0;
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) {
        ++i;
    }
    std::size_t start = i;
    while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) {
        ++i;
    }
    if (i == start) {
        return std::nullopt;
    }
    return std::stoi(raw.substr(start, i - start));
}

RubricScore rubric_score(const std::string & question, const std::string & reference_answer,
                         const std::string & candidate_response, const Rubric & rubric, llmgate::ChatClient & chat) {
    rubric.validate();
    std::ostringstream prompt;
    prompt << "Score the candidate response against the reference on the \"" << rubric.name << "\" rubric ("
           << rubric.scale_min << "-" << rubric.scale_max << "):\n";
    for (std::size_t i = 0; i < rubric.descriptions.size(); ++i) {
        prompt << (rubric.scale_min + static_cast<int>(i)) << ": " << rubric.descriptions[i] << "\n";
    }
    prompt << "\nQuestion: " << question << "\nReference answer: " << reference_answer
           << "\nCandidate response: " << candidate_response
           << "\n\nReply with the integer score first, then a short justification.";

    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string raw = chat.complete("You grade answers strictly by the rubric.", prompt.str());
        auto score = parse_leading_int(raw);
        if (score && *score >= rubric.scale_min && *score <= rubric.scale_max) {
            RubricScore out;
            out.score = *score;
            out.justification = raw;
            return out;
        }
    }
    throw data_error("rubric_score: unparseable judge output after retry");
}

} // namespace fincurate::judge
