#pragma once

#include "fincurate/errors.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fincurate::conversation {

enum class Role { System, User, Assistant, Tool };

const char * role_name(Role r);
std::optional<Role> role_from_name(const std::string & name);

// JSON primitive types used for tool parameter/result typing.
enum class JsonType { String, Number, Integer, Boolean, Object, Array, Null };

const char * json_type_name(JsonType t);
std::optional<JsonType> json_type_from_name(const std::string & name);

struct FieldSpec {
    std::string name;
    JsonType type = JsonType::String;
    bool required = true;
};

struct ToolDefinition {
    std::string name;
    std::string description;
    std::vector<FieldSpec> parameters;
    std::vector<FieldSpec> result_schema;
};

// Immutable after load; shared by validation, rendering and scoring.
class ToolRegistry {
  public:
    ToolRegistry() = default;
    explicit ToolRegistry(std::vector<ToolDefinition> tools);

    static ToolRegistry from_json(const std::string & json_text);
    std::string to_json() const;

    const ToolDefinition * find(const std::string & name) const;
    const std::vector<ToolDefinition> & tools() const { return tools_; }
    bool empty() const { return tools_.empty(); }

  private:
    std::vector<ToolDefinition> tools_;
};

struct ToolCallRequest {
    std::string id;
    std::string function_name;
    std::string arguments_json; // canonical: key-sorted, compact

    bool operator==(const ToolCallRequest &) const = default;
};

struct Message {
    Role role = Role::User;
    std::string content;
    std::vector<ToolCallRequest> tool_calls; // Assistant only
    std::string tool_call_id;                // Tool only
};

enum class Category { TransactionGrievance, MandateManagement, FinanceQnA, Helper, SafetyBias, Identity };
enum class Language { English, Hindi, Hinglish };
enum class Persona { StandardEnglish, LowStructureEnglish, CodeMixed };

const char * category_name(Category c);
const char * language_name(Language l);
const char * persona_name(Persona p);
std::optional<Category> category_from_name(const std::string & name);
std::optional<Language> language_from_name(const std::string & name);
std::optional<Persona> persona_from_name(const std::string & name);

struct ConversationSample {
    std::string id;
    std::vector<Message> messages;
    Category category = Category::FinanceQnA;
    Language language = Language::English;
    Persona persona = Persona::StandardEnglish;

    std::string to_json() const;
};

enum class ParseErrorKind { MalformedJson, UnknownRole, MissingField, BadToolCallShape };

const char * parse_error_name(ParseErrorKind k);

struct ParseError {
    ParseErrorKind kind;
    std::size_t message_index = SIZE_MAX; // SIZE_MAX when not tied to one message
    std::string detail;
};

// Returns either a fully typed sample or the complete error list, never just
// the first error.
std::variant<ConversationSample, std::vector<ParseError>> parse_conversation(const std::string & json_text);

enum class ViolationKind {
    EmptyConversation,
    SystemPosition,     // System message after position 0
    FirstNotUser,       // first non-System message is not a User turn
    RoleAlternation,    // consecutive same-role turns / turn out of order
    OrphanToolResult,   // Tool message without a pending call id
    IncompleteToolResults, // next Assistant turn (or end) with pending call ids
    DuplicateCallId,
    UnknownTool,
    UnknownArgument,
    MissingRequiredArgument,
    ArgumentTypeMismatch,
    ToolResultSchema,
};

const char * violation_name(ViolationKind k);

struct StructureViolation {
    ViolationKind kind;
    std::size_t message_index = 0;
    std::string detail;
};

// Stage I checks ii-iv: role alternation with tool-call interleaving, call
// name/argument typing against the registry, and tool-result schema
// conformance. Returns the full violation list; empty means pass.
std::vector<StructureViolation> validate_structure(const ConversationSample & sample, const ToolRegistry & registry);

bool json_value_matches(const std::string & value_json, JsonType type);

// Canonical key-sorted compact form used for argument equality.
std::string canonical_json(const std::string & json_text);

// Flat prompt rendering with the [AVAILABLE_TOOLS], [TOOL_CALLS] and
// [TOOL_RESULTS] special-token markers. Requires a structurally valid sample;
// throws data_error otherwise.
std::string render_chat_template(const ConversationSample & sample, const ToolRegistry & registry);

struct Stage1Rejection {
    std::size_t input_index = 0;
    std::string sample_id;
    std::vector<std::string> reasons; // parse error / violation names with detail
};

struct Stage1Result {
    std::vector<ConversationSample> accepted;
    std::vector<Stage1Rejection> rejected;
    std::size_t input_count = 0;
};

// Parse + validate over raw JSONL lines; counts are conserved:
// accepted.size() + rejected.size() == input_count.
Stage1Result stage1_filter(const std::vector<std::string> & raw_json_lines, const ToolRegistry & registry);

} // namespace fincurate::conversation
