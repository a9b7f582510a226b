#pragma once

#include "fincurate/errors.hpp"
#include "fincurate/ingest.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::blend {

struct BlendEntry {
    std::string stream_id;
    ingest::DataType data_type = ingest::DataType::Text;
    double sampling_ratio = 0.0;
};

struct BlendSpec {
    std::vector<BlendEntry> entries;
    std::uint64_t seed = 0;

    // ratios must be positive and sum to 1 +- 1e-9
    void validate() const;
};

template <typename T> using Puller = std::function<std::optional<T>()>;

struct RenormalizationEvent {
    std::size_t draw_index = 0;
    std::string exhausted_stream;
};

// Seeded weighted interleaving. Each draw picks a live stream with
// probability proportional to its ratio; when a stream exhausts, its mass is
// renormalized over the rest and the event logged. Ends when all streams are
// exhausted.
template <typename T> class Interleaver {
  public:
    Interleaver(std::vector<Puller<T>> streams, BlendSpec spec) : streams_(std::move(streams)), spec_(std::move(spec)) {
        spec_.validate();
        if (streams_.size() != spec_.entries.size()) {
            throw config_error("interleave: one stream per spec entry required");
        }
        live_.assign(streams_.size(), true);
        rng_state_ = spec_.seed ^ 0x9E3779B97F4A7C15ULL;
    }

    struct Drawn {
        T item;
        std::size_t stream_index;
    };

    std::optional<Drawn> next() {
        while (true) {
            double total = 0.0;
            for (std::size_t i = 0; i < streams_.size(); ++i) {
                if (live_[i]) {
                    total += spec_.entries[i].sampling_ratio;
                }
            }
            if (total <= 0.0) {
                return std::nullopt; // all streams exhausted: normal end
            }
            double u = next_uniform() * total;
            std::size_t pick = streams_.size();
            double acc = 0.0;
            for (std::size_t i = 0; i < streams_.size(); ++i) {
                if (!live_[i]) {
                    continue;
                }
                acc += spec_.entries[i].sampling_ratio;
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick == streams_.size()) { // float edge: last live stream
                for (std::size_t i = streams_.size(); i-- > 0;) {
                    if (live_[i]) {
                        pick = i;
                        break;
                    }
                }
            }
            auto item = streams_[pick]();
            if (item) {
                ++draws_;
                return Drawn{std::move(*item), pick};
            }
            live_[pick] = false;
            renorm_log_.push_back({draws_, spec_.entries[pick].stream_id});
        }
    }

    const std::vector<RenormalizationEvent> & renormalizations() const { return renorm_log_; }

  private:
    // splitmix64: identical draw sequence on every platform
    double next_uniform() {
        rng_state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = rng_state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return static_cast<double>(z >> 11) * 0x1.0p-53;
    }

    std::vector<Puller<T>> streams_;
    BlendSpec spec_;
    std::vector<bool> live_;
    std::uint64_t rng_state_ = 0;
    std::size_t draws_ = 0;
    std::vector<RenormalizationEvent> renorm_log_;
};

// Tokenizer contract for sequence packing.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::int32_t> encode(const std::string & text) = 0;
    virtual std::string decode(const std::vector<std::int32_t> & ids) = 0;
    virtual std::int32_t separator_id() const = 0;
};

// Growing word-level vocabulary; decode(encode(x)) == x for space-separated
// text. Id 0 is the separator.
class WordTokenizer : public Tokenizer {
  public:
    std::vector<std::int32_t> encode(const std::string & text) override;
    std::string decode(const std::vector<std::int32_t> & ids) override;
    std::int32_t separator_id() const override { return 0; }

  private:
    std::vector<std::string> words_;
    std::map<std::string, std::int32_t> ids_;
};

struct Segment {
    std::size_t start = 0;
    std::size_t end = 0; // exclusive
    std::string doc_id;
};

struct PackedSequence {
    std::vector<std::int32_t> token_ids;
    ingest::DataType data_type = ingest::DataType::Text;
    std::vector<Segment> segments;

    std::string to_json() const;
};

struct PackInput {
    std::string doc_id;
    ingest::DataType data_type = ingest::DataType::Text;
    std::string text;
};

// Greedy first-fit packing with one open bin per data type; a sequence never
// mixes data types and never exceeds the context window. Documents longer
// than the window are split into consecutive chunks. One separator token sits
// between packed segments.
class Packer {
  public:
    Packer(Tokenizer & tokenizer, std::size_t context_window);

    // Returns sequences completed by this document (possibly several for an
    // over-length document). Tokenizer failures are counted and skipped.
    std::vector<PackedSequence> push(const PackInput & input);
    // Flush all open bins.
    std::vector<PackedSequence> flush();

    std::size_t tokens_in() const { return tokens_in_; }
    std::size_t tokens_out() const { return tokens_out_; }
    std::size_t separators_out() const { return separators_out_; }
    std::size_t skipped_docs() const { return skipped_docs_; }

  private:
    PackedSequence & bin(ingest::DataType type);
    void append_segment(PackedSequence & seq, const std::string & doc_id,
                        const std::int32_t * tokens, std::size_t count);

    Tokenizer & tokenizer_;
    std::size_t window_;
    std::map<ingest::DataType, PackedSequence> open_;
    std::size_t tokens_in_ = 0;
    std::size_t tokens_out_ = 0;
    std::size_t separators_out_ = 0;
    std::size_t skipped_docs_ = 0;
};

struct CompositionRow {
    std::string data_type;
    std::string dataset;
    double raw_tokens = 0.0;
    double curated_tokens = 0.0;
};

struct CompositionReport {
    std::vector<CompositionRow> rows;
    double total_raw = 0.0;
    double total_curated = 0.0;
};

CompositionReport composition_report(const std::vector<CompositionRow> & rows);

std::string composition_report_text(const CompositionReport & report);
std::string composition_report_csv(const CompositionReport & report);

} // namespace fincurate::blend
