#pragma once

#include "fincurate/cleanse.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace fincurate::dedup {

inline constexpr std::size_t kSketchSize = 128;
inline constexpr std::size_t kBands = 16;
inline constexpr std::size_t kRowsPerBand = 8;
inline constexpr std::size_t kShingleWords = 5;

struct Digest128 {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    bool operator==(const Digest128 &) const = default;
};

struct DocSignature {
    Digest128 exact_hash;
    std::array<std::uint64_t, kSketchSize> sketch{};
};

Digest128 hash128(const std::string & data);

// Word w-gram shingle set of the normalized text; falls back to unigrams
// below kShingleWords words.
std::vector<std::string> shingles(const std::string & normalized_text);

DocSignature signature(const std::string & normalized_text);

// Fraction of equal sketch positions: an unbiased estimate of shingle-set
// Jaccard similarity.
double sketch_agreement(const DocSignature & a, const DocSignature & b);

struct DropRecord {
    std::string doc_id;
    std::string kept_twin_id;
    double estimated_similarity = 0.0;
    bool exact = false;
};

// Streaming first-seen dedup. Candidates come from 16x8 sketch banding plus
// the exact-hash index; decisions are identical to sequential first-seen
// semantics for any worker arrangement that preserves push order.
class Deduper {
  public:
    explicit Deduper(double threshold);

    struct Decision {
        bool kept = true;
        DropRecord drop; // valid when !kept
    };

    Decision push(const std::string & doc_id, const DocSignature & sig);

    const std::vector<DropRecord> & dropped() const { return dropped_; }
    std::size_t kept_count() const { return kept_ids_.size(); }

  private:
    double threshold_;
    std::vector<std::string> kept_ids_;
    std::vector<DocSignature> kept_sigs_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> band_index_[kBands];
    struct DigestHash {
        std::size_t operator()(const Digest128 & d) const { return d.hi ^ (d.lo * 0x9E3779B97F4A7C15ULL); }
    };
    std::unordered_map<Digest128, std::size_t, DigestHash> exact_index_;
    std::vector<DropRecord> dropped_;
};

struct DedupResult {
    std::vector<cleanse::CuratedDocument> kept;
    std::vector<DropRecord> dropped;
};

DedupResult dedup_documents(const std::vector<cleanse::CuratedDocument> & docs, double threshold);

// Dropped-pairs report, one JSON object per line.
std::string drop_report_jsonl(const std::vector<DropRecord> & dropped);

} // namespace fincurate::dedup
