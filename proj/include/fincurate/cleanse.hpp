#pragma once

#include "fincurate/ingest.hpp"

#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace fincurate::cleanse {

enum class Tier { High, Medium, Low };
enum class DropReason { TooShort, Noisy, LowInfo };

const char * tier_name(Tier t);
const char * drop_reason_name(DropReason r);

struct PiiRule {
    std::string name;
    std::string pattern; // ECMAScript regex, applied left-to-right, non-overlapping
    std::string placeholder;
};

struct CleansePolicy {
    std::size_t min_word_count = 25;
    double max_symbol_ratio = 0.4;
    double max_repetition_ratio = 0.3;
    std::vector<PiiRule> pii_rules; // applied in order
    double tier_high_cut = 0.66;
    double tier_low_cut = 0.33;

    // Throws config_error on violated invariants (cuts ordering, empty or
    // digit-bearing placeholders, unparseable patterns).
    void validate() const;

    static CleansePolicy defaults();
};

struct CuratedDocument {
    std::string id;
    ingest::TextRecord record;
    Tier tier = Tier::Medium;
    std::size_t pii_redactions = 0;
    std::optional<DropReason> drop_reason;

    bool kept() const { return !drop_reason.has_value(); }
};

// Whitespace runs collapse to single spaces, control characters are stripped
// and the ends are trimmed, so every document becomes one JSONL-safe line.
// Idempotent; letters, digits and punctuation pass through untouched.
std::string normalize(const std::string & text);

// Feature extraction shared by rule_filter and quality_tier. Ratios are over
// code points; non-ASCII code points never count as symbols.
double symbol_ratio(const std::string & normalized);
// Fraction of word-trigram positions occupied by the most frequent trigram
// (0 when fewer than 3 words).
double repetition_ratio(const std::string & normalized);
std::size_t word_count(const std::string & normalized);

std::optional<DropReason> rule_filter(const ingest::TextRecord & doc, const CleansePolicy & policy);

struct RedactionResult {
    std::string text;
    std::size_t count = 0;
};

RedactionResult anonymize_pii(const std::string & text, const std::vector<PiiRule> & rules);

// Equal-weight composite of four features mapped to [0,1]:
// symbol cleanliness, repetition cleanliness, mean sentence length
// (triangular, peak at 20 words), and stopword-fraction proximity to 0.4.
double quality_score(const std::string & normalized);
Tier quality_tier(const ingest::TextRecord & doc, const CleansePolicy & policy);

// Full per-document pass: normalize, filter, redact, tier.
CuratedDocument cleanse_document(std::string id, ingest::TextRecord record, const CleansePolicy & policy);

} // namespace fincurate::cleanse
