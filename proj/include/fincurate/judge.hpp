#pragma once

#include "fincurate/conversation.hpp"
#include "fincurate/errors.hpp"
#include "fincurate/llmgate.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::judge {

struct Metric {
    std::string id;
    std::string name;
    std::string prompt_template; // {{conversation}} expands to the rendered sample
};

struct Pillar {
    std::string name;
    std::vector<Metric> metrics;
};

// Four pillars sized 5 + 5 + 6 + 4 (20 metrics), unique metric ids.
struct MetricTaxonomy {
    std::vector<Pillar> pillars;

    void validate() const;
    const Metric * find(const std::string & metric_id) const;
    std::vector<const Metric *> all_metrics() const;
    // Pillar index (0-based) per metric id.
    std::map<std::string, std::size_t> pillar_of() const;

    static MetricTaxonomy from_json(const std::string & json_text);
    std::string to_json() const;

    // Built-in default: Domain Fidelity & Compliance (5), Functional
    // Competency (5), Interaction Quality & Flow (6), Resolution & Recovery (4).
    static MetricTaxonomy defaults();
};

enum class MetricValue { Pass = 1, Fail = 0, NotApplicable = -1 };

const char * metric_value_name(MetricValue v);

struct Verdict {
    std::string sample_id;
    std::map<std::string, MetricValue> metrics; // one entry per taxonomy metric
    std::map<std::string, std::string> raw_outputs; // judge text retained for audit
    std::vector<std::string> audit_flags; // e.g. unparseable-after-retry metrics
};

// One chat call per metric; outputs parsed strictly to {1, 0, NA}. An
// unparseable output is retried once, then recorded NA with an audit flag.
// Throws client_error when the chat backend is unavailable (the sample
// aborts, not the batch).
Verdict judge_sample(const conversation::ConversationSample & sample, const MetricTaxonomy & taxonomy,
                     const conversation::ToolRegistry & registry, llmgate::ChatClient & chat);

struct Stage2Policy {
    // Reject when any metric of these pillars (0-based) fails; NA never rejects.
    std::vector<std::size_t> rejecting_pillars = {0, 1};
};

struct Stage2Rejection {
    std::string sample_id;
    std::vector<std::string> reasons; // failing metric ids
};

struct Stage2Result {
    std::vector<std::string> accepted_ids;
    std::vector<Stage2Rejection> rejected;
    std::map<std::string, std::size_t> rejection_histogram; // metric id -> count
};

Stage2Result stage2_filter(const std::vector<Verdict> & verdicts, const MetricTaxonomy & taxonomy,
                           const Stage2Policy & policy = {});

std::string verdicts_jsonl(const std::vector<Verdict> & verdicts, const Stage2Result & result);

struct Rubric {
    std::string name;
    int scale_min = 1;
    int scale_max = 5;
    std::vector<std::string> descriptions; // one per score, ascending

    void validate() const;
    static Rubric from_json(const std::string & json_text);

    // The 1-5 coherence rubric used for judge-based response evaluation.
    static Rubric coherence();
};

struct RubricScore {
    int score = 0;
    std::string justification;
};

// Judge output parsed to an integer within the rubric scale; out-of-range or
// unparseable output is retried once, then raises data_error.
RubricScore rubric_score(const std::string & question, const std::string & reference_answer,
                         const std::string & candidate_response, const Rubric & rubric, llmgate::ChatClient & chat);

} // namespace fincurate::judge
