#include "fincurate/blend.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fincurate::blend {

using json = nlohmann::ordered_json;

void BlendSpec::validate() const {
    if (entries.empty()) {
        throw config_error("blend: no entries");
    }
    double sum = 0.0;
    for (const auto & e : entries) {
        if (!(e.sampling_ratio > 0.0)) {
            throw config_error("blend: sampling ratio must be > 0 for " + e.stream_id);
        }
        sum += e.sampling_ratio;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw config_error("blend: sampling ratios sum to " + std::to_string(sum) + ", expected 1");
    }
}

std::vector<std::int32_t> WordTokenizer::encode(const std::string & text) {
    std::vector<std::int32_t> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find(' ', start);
        if (end == std::string::npos) {
            end = text.size();
        }
        if (end > start) {
            std::string word = text.substr(start, end - start);
            auto it = ids_.find(word);
            if (it == ids_.end()) {
                std::int32_t id = static_cast<std::int32_t>(words_.size()) + 1; // 0 is the separator
                it = ids_.emplace(std::move(word), id).first;
                words_.push_back(it->first);
            }
            out.push_back(it->second);
        }
        start = end + 1;
    }
    return out;
}

std::string WordTokenizer::decode(const std::vector<std::int32_t> & ids) {
    std::string out;
    for (std::int32_t id : ids) {
        if (id == separator_id()) {
            continue;
        }
        if (id < 1 || static_cast<std::size_t>(id) > words_.size()) {
            throw data_error("tokenizer: unknown token id " + std::to_string(id));
        }
        if (!out.empty()) {
            out += ' ';
        }
        out += words_[static_cast<std::size_t>(id) - 1];
    }
    return out;
}

std::string PackedSequence::to_json() const {
    json j;
    j["token_ids"] = token_ids;
    j["data_type"] = ingest::data_type_name(data_type);
    j["segments"] = json::array();
    for (const auto & s : segments) {
        j["segments"].push_back({s.start, s.end, s.doc_id});
    }
    return j.dump();
}

Packer::Packer(Tokenizer & tokenizer, std::size_t context_window) : tokenizer_(tokenizer), window_(context_window) {
    if (window_ < 2) {
        throw config_error("pack: context window must be >= 2");
    }
}

PackedSequence & Packer::bin(ingest::DataType type) {
    auto it = open_.find(type);
    if (it == open_.end()) {
        PackedSequence seq;
        seq.data_type = type;
        it = open_.emplace(type, std::move(seq)).first;
    }
    return it->second;
}

void Packer::append_segment(PackedSequence & seq, const std::string & doc_id, const std::int32_t * tokens,
                            std::size_t count) {
    if (!seq.token_ids.empty()) {
        seq.token_ids.push_back(tokenizer_.separator_id());
        ++separators_out_;
    }
    std::size_t start = seq.token_ids.size();
    seq.token_ids.insert(seq.token_ids.end(), tokens, tokens + count);
    seq.segments.push_back({start, start + count, doc_id});
    tokens_out_ += count;
}

std::vector<PackedSequence> Packer::push(const PackInput & input) {
    std::vector<PackedSequence> emitted;
    std::vector<std::int32_t> tokens;
    try {
        tokens = tokenizer_.encode(input.text);
    } catch (const std::exception &) {
        ++skipped_docs_;
        return emitted;
    }
    if (tokens.empty()) {
        ++skipped_docs_;
        return emitted;
    }
    tokens_in_ += tokens.size();

    // over-length documents chunk into consecutive windows
    std::size_t offset = 0;
    std::size_t chunk_no = 0;
    while (offset < tokens.size()) {
        std::size_t count = std::min(window_, tokens.size() - offset);
        std::string doc_id = tokens.size() <= window_ ? input.doc_id
                                                      : input.doc_id + "#" + std::to_string(chunk_no);
        PackedSequence & seq = bin(input.data_type);
        std::size_t needed = seq.token_ids.empty() ? count : seq.token_ids.size() + 1 + count;
        if (needed > window_) {
            emitted.push_back(std::move(seq));
            open_.erase(input.data_type);
            PackedSequence & fresh = bin(input.data_type);
            append_segment(fresh, doc_id, tokens.data() + offset, count);
            if (fresh.token_ids.size() == window_) {
                emitted.push_back(std::move(fresh));
                open_.erase(input.data_type);
            }
        } else {
            append_segment(seq, doc_id, tokens.data() + offset, count);
            if (seq.token_ids.size() == window_) {
                emitted.push_back(std::move(seq));
                open_.erase(input.data_type);
            }
        }
        offset += count;
        ++chunk_no;
    }
    return emitted;
}

std::vector<PackedSequence> Packer::flush() {
    std::vector<PackedSequence> emitted;
    for (auto & [type, seq] : open_) {
        if (!seq.token_ids.empty()) {
            emitted.push_back(std::move(seq));
        }
    }
    open_.clear();
    return emitted;
}

CompositionReport composition_report(const std::vector<CompositionRow> & rows) {
    CompositionReport report;
    report.rows = rows;
    for (const auto & r : rows) {
        report.total_raw += r.raw_tokens;
        report.total_curated += r.curated_tokens;
    }
    return report;
}

std::string composition_report_text(const CompositionReport & report) {
    std::size_t type_width = 9;
    std::size_t name_width = 7;
    for (const auto & r : report.rows) {
        type_width = std::max(type_width, r.data_type.size());
        name_width = std::max(name_width, r.dataset.size());
    }
    std::ostringstream out;
    char buf[128];
    auto line = [&](const std::string & type, const std::string & name, double raw, double curated) {
        std::snprintf(buf, sizeof(buf), "%-*s  %-*s  %14.2f  %14.2f\n", static_cast<int>(type_width), type.c_str(),
                      static_cast<int>(name_width), name.c_str(), raw, curated);
        out << buf;
    };
    std::snprintf(buf, sizeof(buf), "%-*s  %-*s  %14s  %14s\n", static_cast<int>(type_width), "data_type",
                  static_cast<int>(name_width), "dataset", "raw_tokens", "curated_tokens");
    out << buf;
    for (const auto & r : report.rows) {
        line(r.data_type, r.dataset, r.raw_tokens, r.curated_tokens);
    }
    line("total", "", report.total_raw, report.total_curated);
    return out.str();
}

std::string composition_report_csv(const CompositionReport & report) {
    std::ostringstream out;
    out << "data_type,dataset,raw_tokens,curated_tokens\n";
    char buf[64];
    for (const auto & r : report.rows) {
        std::snprintf(buf, sizeof(buf), ",%.2f,%.2f\n", r.raw_tokens, r.curated_tokens);
        out << r.data_type << ',' << r.dataset << buf;
    }
    std::snprintf(buf, sizeof(buf), "total,,%.2f,%.2f\n", report.total_raw, report.total_curated);
    out << buf;
    return out.str();
}

} // namespace fincurate::blend
