#pragma once

#include "fincurate/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fincurate::ingest {

// The five corpus categories a record may belong to.
enum class DataType {
    Text,
    Math,
    Code,
    Finance,
    Multilingual,
};

const char * data_type_name(DataType t);
std::optional<DataType> data_type_from_name(const std::string & name);

// One corpus item: a single line of a line-delimited JSON file.
// Required key "text"; optional "source", "data_type", "meta".
struct TextRecord {
    std::string text;
    std::string source;
    DataType data_type = DataType::Text;
    std::map<std::string, std::string> meta;

    bool operator==(const TextRecord &) const = default;
};

// Canonical single-line JSON form. serialize(parse(serialize(r))) == serialize(r).
std::string serialize_record(const TextRecord & rec);

enum class ParseErrorKind {
    MalformedJson,
    MissingText,
    EmptyText,
    InvalidUtf8,
    BadFieldType,
    UnknownDataType,
};

const char * parse_error_name(ParseErrorKind k);

struct ParseFailure {
    std::size_t line_no = 0; // 1-based
    ParseErrorKind kind = ParseErrorKind::MalformedJson;
    std::string detail;
};

// Lazy, single-consumer reader over one JSONL file. Malformed lines are
// yielded as ParseFailure items, never dropped and never fatal.
class TextStream {
  public:
    struct Item {
        std::size_t line_no = 0;
        std::variant<TextRecord, ParseFailure> value;

        bool ok() const { return std::holds_alternative<TextRecord>(value); }
        const TextRecord & record() const { return std::get<TextRecord>(value); }
        const ParseFailure & failure() const { return std::get<ParseFailure>(value); }
    };

    std::optional<Item> next();

  private:
    friend TextStream open_text_stream(const std::filesystem::path & path);
    explicit TextStream(const std::filesystem::path & path);

    std::ifstream in_;
    std::size_t line_no_ = 0;
};

// Throws data_error if the file cannot be opened.
TextStream open_text_stream(const std::filesystem::path & path);

// Parse one JSONL line into a record; used by TextStream and directly by tests.
std::variant<TextRecord, ParseFailure> parse_record_line(const std::string & line, std::size_t line_no);

struct ShardInfo {
    std::string path;
    std::size_t record_count = 0;
    std::size_t byte_count = 0;
};

struct ShardManifest {
    std::vector<ShardInfo> shards;
    std::size_t total_records = 0;
    std::string created_at; // RFC 3339 UTC

    std::string to_json() const;
    static ShardManifest from_json(const std::string & text);
};

// Write records into `<stem>-NNNNN.jsonl` shards under out_dir, at most
// max_records_per_shard records each. Pass created_at to make the manifest
// reproducible; empty means current time.
class ShardWriter {
  public:
    ShardWriter(std::filesystem::path out_dir, std::string stem, std::size_t max_records_per_shard);

    void write(const TextRecord & rec);
    ShardManifest finish(const std::string & created_at = "");

  private:
    void roll();

    std::filesystem::path out_dir_;
    std::string stem_;
    std::size_t max_per_shard_;
    std::ofstream out_;
    ShardManifest manifest_;
    std::size_t in_current_ = 0;
    std::size_t bytes_current_ = 0;
    std::size_t shard_index_ = 0;
};

template <typename Iter>
ShardManifest write_shards(Iter begin, Iter end, std::size_t max_records_per_shard,
                           const std::filesystem::path & out_dir, const std::string & stem = "shard",
                           const std::string & created_at = "") {
    ShardWriter writer(out_dir, stem, max_records_per_shard);
    for (Iter it = begin; it != end; ++it) {
        writer.write(*it);
    }
    return writer.finish(created_at);
}

bool utf8_valid(const std::string & s);

std::string timestamp_utc_now();

} // namespace fincurate::ingest
