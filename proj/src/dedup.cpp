#include "fincurate/dedup.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstring>
#include <random>

namespace fincurate::dedup {

// MurmurHash3 x64 128-bit (public domain, Austin Appleby).
static inline std::uint64_t rotl64(std::uint64_t x, int8_t r) { return (x << r) | (x >> (64 - r)); }

static inline std::uint64_t fmix64(std::uint64_t k) {
    k ^= k >> 33;
    k *= 0xFF51AFD7ED558CCDULL;
    k ^= k >> 33;
    k *= 0xC4CEB9FE1A85EC53ULL;
    k ^= k >> 33;
    return k;
}

Digest128 hash128(const std::string & data) {
    const auto * blocks = reinterpret_cast<const std::uint8_t *>(data.data());
    const std::size_t len = data.size();
    const std::size_t nblocks = len / 16;

    std::uint64_t h1 = 0x9747B28C;
    std::uint64_t h2 = 0x9747B28C;
    const std::uint64_t c1 = 0x87C37B91114253D5ULL;
    const std::uint64_t c2 = 0x4CF5AD432745937FULL;

    for (std::size_t i = 0; i < nblocks; ++i) {
        std::uint64_t k1, k2;
        std::memcpy(&k1, blocks + i * 16, 8);
        std::memcpy(&k2, blocks + i * 16 + 8, 8);
        k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
        h1 = rotl64(h1, 27); h1 += h2; h1 = h1 * 5 + 0x52DCE729;
        k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2;
        h2 = rotl64(h2, 31); h2 += h1; h2 = h2 * 5 + 0x38495AB5;
    }

    const std::uint8_t * tail = blocks + nblocks * 16;
    std::uint64_t k1 = 0;
    std::uint64_t k2 = 0;
    switch (len & 15) {
        case 15: k2 ^= static_cast<std::uint64_t>(tail[14]) << 48; [[fallthrough]];
        case 14: k2 ^= static_cast<std::uint64_t>(tail[13]) << 40; [[fallthrough]];
        case 13: k2 ^= static_cast<std::uint64_t>(tail[12]) << 32; [[fallthrough]];
        case 12: k2 ^= static_cast<std::uint64_t>(tail[11]) << 24; [[fallthrough]];
        case 11: k2 ^= static_cast<std::uint64_t>(tail[10]) << 16; [[fallthrough]];
        case 10: k2 ^= static_cast<std::uint64_t>(tail[9]) << 8; [[fallthrough]];
        case 9:  k2 ^= static_cast<std::uint64_t>(tail[8]);
                 k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2; [[fallthrough]];
        case 8:  k1 ^= static_cast<std::uint64_t>(tail[7]) << 56; [[fallthrough]];
        case 7:  k1 ^= static_cast<std::uint64_t>(tail[6]) << 48; [[fallthrough]];
        case 6:  k1 ^= static_cast<std::uint64_t>(tail[5]) << 40; [[fallthrough]];
        case 5:  k1 ^= static_cast<std::uint64_t>(tail[4]) << 32; [[fallthrough]];
        case 4:  k1 ^= static_cast<std::uint64_t>(tail[3]) << 24; [[fallthrough]];
        case 3:  k1 ^= static_cast<std::uint64_t>(tail[2]) << 16; [[fallthrough]];
        case 2:  k1 ^= static_cast<std::uint64_t>(tail[1]) << 8; [[fallthrough]];
        case 1:  k1 ^= static_cast<std::uint64_t>(tail[0]);
                 k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
    }

    h1 ^= len;
    h2 ^= len;
    h1 += h2;
    h2 += h1;
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 += h2;
    h2 += h1;
    return {h1, h2};
}

std::vector<std::string> shingles(const std::string & normalized_text) {
    std::vector<std::string> words;
    std::size_t start = 0;
    while (start < normalized_text.size()) {
        std::size_t end = normalized_text.find(' ', start);
        if (end == std::string::npos) {
            end = normalized_text.size();
        }
        if (end > start) {
            words.push_back(normalized_text.substr(start, end - start));
        }
        start = end + 1;
    }
    std::vector<std::string> out;
    if (words.size() < kShingleWords) {
        out = std::move(words);
        return out;
    }
    out.reserve(words.size() - kShingleWords + 1);
    for (std::size_t i = 0; i + kShingleWords <= words.size(); ++i) {
        std::string s = words[i];
        for (std::size_t k = 1; k < kShingleWords; ++k) {
            s += ' ';
            s += words[i + k];
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

constexpr std::uint64_t kMersenne61 = (1ULL << 61) - 1;

struct Permutations {
    std::array<std::uint64_t, kSketchSize> a;
    std::array<std::uint64_t, kSketchSize> b;
    Permutations() {
        std::mt19937_64 rng(0x5EEDC0FFEE123457ULL);
        for (std::size_t i = 0; i < kSketchSize; ++i) {
            a[i] = rng() % (kMersenne61 - 1) + 1;
            b[i] = rng() % kMersenne61;
        }
    }
};

const Permutations & perms() {
    static const Permutations p;
    return p;
}

inline std::uint64_t mulmod61(std::uint64_t x, std::uint64_t y) {
    __uint128_t z = static_cast<__uint128_t>(x) * y;
    std::uint64_t lo = static_cast<std::uint64_t>(z & kMersenne61);
    std::uint64_t hi = static_cast<std::uint64_t>(z >> 61);
    std::uint64_t r = lo + hi;
    if (r >= kMersenne61) {
        r -= kMersenne61;
    }
    return r;
}

} // namespace

DocSignature signature(const std::string & normalized_text) {
    DocSignature sig;
    sig.exact_hash = hash128(normalized_text);
    sig.sketch.fill(UINT64_MAX);
    const auto & p = perms();
    for (const auto & sh : shingles(normalized_text)) {
        std::uint64_t h = hash128(sh).lo % kMersenne61;
        for (std::size_t i = 0; i < kSketchSize; ++i) {
            std::uint64_t v = mulmod61(p.a[i], h) + p.b[i];
            if (v >= kMersenne61) {
                v -= kMersenne61;
            }
            if (v < sig.sketch[i]) {
                sig.sketch[i] = v;
            }
        }
    }
    return sig;
}

double sketch_agreement(const DocSignature & a, const DocSignature & b) {
    std::size_t equal = 0;
    for (std::size_t i = 0; i < kSketchSize; ++i) {
        if (a.sketch[i] == b.sketch[i]) {
            ++equal;
        }
    }
    return static_cast<double>(equal) / static_cast<double>(kSketchSize);
}

Deduper::Deduper(double threshold) : threshold_(threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw config_error("dedup: threshold must be in (0,1]");
    }
}

static std::uint64_t band_key(const DocSignature & sig, std::size_t band) {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ band;
    for (std::size_t r = 0; r < kRowsPerBand; ++r) {
        h ^= sig.sketch[band * kRowsPerBand + r];
        h *= 0x100000001B3ULL;
    }
    return h;
}

Deduper::Decision Deduper::push(const std::string & doc_id, const DocSignature & sig) {
    // exact duplicates drop regardless of threshold
    if (auto it = exact_index_.find(sig.exact_hash); it != exact_index_.end()) {
        DropRecord rec{doc_id, kept_ids_[it->second], 1.0, true};
        dropped_.push_back(rec);
        return {false, rec};
    }

    std::size_t best_idx = SIZE_MAX;
    double best_sim = -1.0;
    std::vector<std::size_t> seen;
    for (std::size_t band = 0; band < kBands; ++band) {
        auto it = band_index_[band].find(band_key(sig, band));
        if (it == band_index_[band].end()) {
            continue;
        }
        for (std::size_t idx : it->second) {
            if (std::find(seen.begin(), seen.end(), idx) != seen.end()) {
                continue;
            }
            seen.push_back(idx);
            double sim = sketch_agreement(sig, kept_sigs_[idx]);
            if (sim > best_sim) {
                best_sim = sim;
                best_idx = idx;
            }
        }
    }
    if (best_idx != SIZE_MAX && best_sim >= threshold_) {
        DropRecord rec{doc_id, kept_ids_[best_idx], best_sim, false};
        dropped_.push_back(rec);
        return {false, rec};
    }

    std::size_t idx = kept_ids_.size();
    kept_ids_.push_back(doc_id);
    kept_sigs_.push_back(sig);
    exact_index_.emplace(sig.exact_hash, idx);
    for (std::size_t band = 0; band < kBands; ++band) {
        band_index_[band][band_key(sig, band)].push_back(idx);
    }
    return {true, {}};
}

DedupResult dedup_documents(const std::vector<cleanse::CuratedDocument> & docs, double threshold) {
    DedupResult result;
    Deduper dedup(threshold);
    for (const auto & doc : docs) {
        auto decision = dedup.push(doc.id, signature(doc.record.text));
        if (decision.kept) {
            result.kept.push_back(doc);
        }
    }
    result.dropped = dedup.dropped();
    return result;
}

std::string drop_report_jsonl(const std::vector<DropRecord> & dropped) {
    std::string out;
    for (const auto & rec : dropped) {
        nlohmann::ordered_json j;
        j["doc_id"] = rec.doc_id;
        j["twin_id"] = rec.kept_twin_id;
        j["estimated_similarity"] = rec.estimated_similarity;
        j["exact"] = rec.exact;
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace fincurate::dedup
