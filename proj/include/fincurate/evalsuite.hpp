#pragma once

#include "fincurate/conversation.hpp"
#include "fincurate/errors.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::evalsuite {

// Next-token probability vector over the vocabulary. The KL formula requires
// strict positivity; validate() also checks normalization to 1 +- 1e-9.
struct TokenDistribution {
    std::vector<double> probs;

    void validate() const; // throws data_error
};

struct AlignedPositional {
    std::size_t position = 0;
    TokenDistribution dist_cpt;  // P after domain adaptation
    TokenDistribution dist_base; // P of the reference model
};

// Natural-log KL divergence: sum over the vocabulary of
// p(w) * (ln p(w) - ln q(w)). Throws on vocab mismatch or a non-positive
// entry; never returns a negative value for valid inputs.
double token_kl(const TokenDistribution & p, const TokenDistribution & q);

// Two-level average: mean over sequences of the per-sequence mean of
// positional KL values. Deliberately NOT a pooled token mean.
double corpus_kl(const std::vector<std::vector<AlignedPositional>> & sequences);

// Per-token natural log probabilities ln P(x_i | x_<i)); all <= 0, N >= 1.
struct LogProbSequence {
    std::vector<double> logprobs;

    void validate() const;
};

// exp(-(1/N) * sum of logprobs)
double perplexity(const LogProbSequence & seq);

// Token-weighted pooled perplexity across sequences:
// exp of the token-weighted mean negative log-likelihood.
double pooled_perplexity(const std::vector<LogProbSequence> & seqs);

enum class DriftStatus { Ok, Warn };

// Warn when the corpus-average KL reaches the overfitting threshold
// (inclusive, default 1.0).
DriftStatus drift_guard(double kl_avg, double threshold = 1.0);

struct ToolCallScore {
    std::string tool;
    conversation::Language language = conversation::Language::English;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    bool no_support = false; // no gold and no predicted calls for this tool

    double precision() const;
    double recall() const;
    double f1() const;
};

// Per-assistant-turn set matching on (tool name, canonical arguments).
// Unmatched gold calls count FN, unmatched predicted calls count FP; an
// argument-mismatched call therefore contributes one FN and one FP.
// Samples are aligned by id; throws data_error on misalignment.
// registry_tools, when given, guarantees a row per (tool, language) so the
// report stays total; rows with no support report F1 = 1.0 and a flag.
std::vector<ToolCallScore> tool_call_f1(const std::vector<conversation::ConversationSample> & predicted,
                                        const std::vector<conversation::ConversationSample> & gold,
                                        const std::vector<std::string> & registry_tools = {});

std::string tool_call_report_csv(const std::vector<ToolCallScore> & scores);

enum class Difficulty { Low, Medium, High };
enum class QuestionType { Knowledge, Reasoning, Hybrid };
enum class BloomLevel { Remember, Understand, Apply, Analyse, Evaluate, Create };
enum class WordBand { Short, Medium, Long };
enum class DistractorQuality { Low, Medium, High };

const char * difficulty_name(Difficulty d);
const char * question_type_name(QuestionType q);
const char * bloom_name(BloomLevel b);
const char * word_band_name(WordBand w);
const char * distractor_name(DistractorQuality d);

struct QuestionProfile {
    Difficulty difficulty = Difficulty::Medium;
    QuestionType qtype = QuestionType::Knowledge;
    BloomLevel bloom = BloomLevel::Remember;
    WordBand word_band = WordBand::Short;
    double ambiguity = 0.0; // [0,1], lower is clearer
    DistractorQuality distractor_quality = DistractorQuality::Medium;
    std::string category; // free-form, e.g. "conceptual_based"
};

// Pluggable classifier for the non-deterministic axes; the word band is
// always computed by rule from the stem alone.
class QuestionClassifier {
  public:
    virtual ~QuestionClassifier() = default;
    virtual QuestionProfile classify(const std::string & stem, const std::vector<std::string> & options) = 0;
};

// Deterministic keyword/length rules; the offline default.
class RuleQuestionClassifier : public QuestionClassifier {
  public:
    QuestionProfile classify(const std::string & stem, const std::vector<std::string> & options) override;
};

// Stem word count -> band: <25 Short, 25..50 Medium, >50 Long.
// (The published bands leave 41-50 unmapped; this artifact extends Medium.)
WordBand word_band_of(const std::string & stem);

// Requires exactly 4 options.
QuestionProfile profile_question(const std::string & stem, const std::vector<std::string> & options,
                                 QuestionClassifier & classifier);

struct DistributionRow {
    std::string category; // "axis: value"
    std::size_t count = 0;
    double percentage = 0.0;
};

// Per-axis tally; percentages within one axis sum to 100 +- 0.1.
std::vector<DistributionRow> distribution_report(const std::vector<QuestionProfile> & profiles);

std::string distribution_report_text(const std::vector<DistributionRow> & rows);

} // namespace fincurate::evalsuite
