#include "fincurate/ingest.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <sstream>

using json = nlohmann::ordered_json;

namespace fincurate::ingest {

const char * data_type_name(DataType t) {
    switch (t) {
        case DataType::Text:         return "text";
        case DataType::Math:         return "math";
        case DataType::Code:         return "code";
        case DataType::Finance:      return "finance";
        case DataType::Multilingual: return "multilingual";
    }
    return "text";
}

std::optional<DataType> data_type_from_name(const std::string & name) {
    if (name == "text")         return DataType::Text;
    if (name == "math")         return DataType::Math;
    if (name == "code")         return DataType::Code;
    if (name == "finance")      return DataType::Finance;
    if (name == "multilingual") return DataType::Multilingual;
    return std::nullopt;
}

const char * parse_error_name(ParseErrorKind k) {
    switch (k) {
        case ParseErrorKind::MalformedJson:   return "malformed_json";
        case ParseErrorKind::MissingText:     return "missing_text";
        case ParseErrorKind::EmptyText:       return "empty_text";
        case ParseErrorKind::InvalidUtf8:     return "invalid_utf8";
        case ParseErrorKind::BadFieldType:    return "bad_field_type";
        case ParseErrorKind::UnknownDataType: return "unknown_data_type";
    }
    return "malformed_json";
}

bool utf8_valid(const std::string & s) {
    const auto * p = reinterpret_cast<const unsigned char *>(s.data());
    std::size_t n = s.size();
    std::size_t i = 0;
    while (i < n) {
        unsigned char c = p[i];
        std::size_t len;
        uint32_t cp;
        if (c < 0x80) {
            i += 1;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > n) {
            return false;
        }
        for (std::size_t k = 1; k < len; ++k) {
            if ((p[i + k] & 0xC0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (p[i + k] & 0x3F);
        }
        // overlongs, surrogates, out of range
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
            return false;
        }
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += len;
    }
    return true;
}

std::string serialize_record(const TextRecord & rec) {
    json j;
    j["text"] = rec.text;
    if (!rec.source.empty()) {
        j["source"] = rec.source;
    }
    j["data_type"] = data_type_name(rec.data_type);
    if (!rec.meta.empty()) {
        j["meta"] = rec.meta; // std::map keeps keys sorted
    }
    return j.dump();
}

std::variant<TextRecord, ParseFailure> parse_record_line(const std::string & line, std::size_t line_no) {
    auto fail = [&](ParseErrorKind kind, std::string detail) {
        return ParseFailure{line_no, kind, std::move(detail)};
    };
    if (!utf8_valid(line)) {
        return fail(ParseErrorKind::InvalidUtf8, "line is not valid UTF-8");
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return fail(ParseErrorKind::MalformedJson, "not a JSON object");
    }
    if (!j.contains("text")) {
        return fail(ParseErrorKind::MissingText, "required key \"text\" absent");
    }
    if (!j["text"].is_string()) {
        return fail(ParseErrorKind::BadFieldType, "\"text\" must be a string");
    }
    TextRecord rec;
    rec.text = j["text"].get<std::string>();
    if (rec.text.empty()) {
        return fail(ParseErrorKind::EmptyText, "\"text\" is empty");
    }
    if (j.contains("source")) {
        if (!j["source"].is_string()) {
            return fail(ParseErrorKind::BadFieldType, "\"source\" must be a string");
        }
        rec.source = j["source"].get<std::string>();
    }
    if (j.contains("data_type")) {
        if (!j["data_type"].is_string()) {
            return fail(ParseErrorKind::BadFieldType, "\"data_type\" must be a string");
        }
        auto dt = data_type_from_name(j["data_type"].get<std::string>());
        if (!dt) {
            return fail(ParseErrorKind::UnknownDataType, "\"data_type\": " + j["data_type"].get<std::string>());
        }
        rec.data_type = *dt;
    }
    if (j.contains("meta")) {
        if (!j["meta"].is_object()) {
            return fail(ParseErrorKind::BadFieldType, "\"meta\" must be an object");
        }
        for (auto & [key, value] : j["meta"].items()) {
            if (!value.is_string()) {
                return fail(ParseErrorKind::BadFieldType, "\"meta\" values must be strings");
            }
            rec.meta[key] = value.get<std::string>();
        }
    }
    return rec;
}

TextStream::TextStream(const std::filesystem::path & path) : in_(path) {
    if (!in_) {
        throw data_error("cannot open for reading: " + path.string());
    }
}

TextStream open_text_stream(const std::filesystem::path & path) {
    return TextStream(path);
}

std::optional<TextStream::Item> TextStream::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue; // blank lines carry no record and no failure
        }
        return Item{line_no_, parse_record_line(line, line_no_)};
    }
    return std::nullopt;
}

std::string timestamp_utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string ShardManifest::to_json() const {
    json j;
    j["shards"] = json::array();
    for (const auto & s : shards) {
        j["shards"].push_back({{"path", s.path}, {"record_count", s.record_count}, {"byte_count", s.byte_count}});
    }
    j["total_records"] = total_records;
    j["created_at"] = created_at;
    return j.dump(2);
}

ShardManifest ShardManifest::from_json(const std::string & text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("shards")) {
        throw data_error("malformed shard manifest");
    }
    ShardManifest m;
    for (const auto & s : j["shards"]) {
        m.shards.push_back({s.at("path").get<std::string>(), s.at("record_count").get<std::size_t>(),
                            s.at("byte_count").get<std::size_t>()});
    }
    m.total_records = j.at("total_records").get<std::size_t>();
    m.created_at = j.value("created_at", "");
    return m;
}

ShardWriter::ShardWriter(std::filesystem::path out_dir, std::string stem, std::size_t max_records_per_shard)
    : out_dir_(std::move(out_dir)), stem_(std::move(stem)), max_per_shard_(max_records_per_shard) {
    if (max_per_shard_ < 1) {
        throw config_error("max_records_per_shard must be >= 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec || !std::filesystem::is_directory(out_dir_)) {
        throw data_error("cannot create output directory: " + out_dir_.string());
    }
}

void ShardWriter::roll() {
    if (out_.is_open()) {
        out_.close();
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s-%05zu.jsonl", stem_.c_str(), shard_index_);
    auto path = out_dir_ / name;
    out_.open(path, std::ios::trunc);
    if (!out_) {
        throw data_error("cannot open for writing: " + path.string());
    }
    // manifest keeps paths relative to its own directory so runs stay
    // byte-reproducible and relocatable
    manifest_.shards.push_back({name, 0, 0});
    in_current_ = 0;
    bytes_current_ = 0;
    ++shard_index_;
}

void ShardWriter::write(const TextRecord & rec) {
    if (!out_.is_open() || in_current_ >= max_per_shard_) {
        roll();
    }
    std::string line = serialize_record(rec);
    out_ << line << '\n';
    ++in_current_;
    bytes_current_ += line.size() + 1;
    manifest_.shards.back().record_count = in_current_;
    manifest_.shards.back().byte_count = bytes_current_;
    ++manifest_.total_records;
}

ShardManifest ShardWriter::finish(const std::string & created_at) {
    if (out_.is_open()) {
        out_.close();
    }
    manifest_.created_at = created_at.empty() ? timestamp_utc_now() : created_at;
    return manifest_;
}

} // namespace fincurate::ingest
