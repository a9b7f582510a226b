#include "fincurate/conversation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <unordered_set>

namespace fincurate::conversation {

using json = nlohmann::json;          // unordered: dumps object keys sorted
using ojson = nlohmann::ordered_json; // preserves insertion order

const char * role_name(Role r) {
    switch (r) {
        case Role::System:    return "system";
        case Role::User:      return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool:      return "tool";
    }
    return "user";
}

std::optional<Role> role_from_name(const std::string & name) {
    if (name == "system")    return Role::System;
    if (name == "user")      return Role::User;
    if (name == "assistant") return Role::Assistant;
    if (name == "tool")      return Role::Tool;
    return std::nullopt;
}

const char * json_type_name(JsonType t) {
    switch (t) {
        case JsonType::String:  return "string";
        case JsonType::Number:  return "number";
        case JsonType::Integer: return "integer";
        case JsonType::Boolean: return "boolean";
        case JsonType::Object:  return "object";
        case JsonType::Array:   return "array";
        case JsonType::Null:    return "null";
    }
    return "string";
}

std::optional<JsonType> json_type_from_name(const std::string & name) {
    if (name == "string")  return JsonType::String;
    if (name == "number")  return JsonType::Number;
    if (name == "integer") return JsonType::Integer;
    if (name == "boolean") return JsonType::Boolean;
    if (name == "object")  return JsonType::Object;
    if (name == "array")   return JsonType::Array;
    if (name == "null")    return JsonType::Null;
    return std::nullopt;
}

const char * category_name(Category c) {
    switch (c) {
        case Category::TransactionGrievance: return "transaction_grievance";
        case Category::MandateManagement:    return "mandate_management";
        case Category::FinanceQnA:           return "finance_qna";
        case Category::Helper:               return "helper";
        case Category::SafetyBias:           return "safety_bias";
        case Category::Identity:             return "identity";
    }
    return "finance_qna";
}

const char * language_name(Language l) {
    switch (l) {
        case Language::English:  return "english";
        case Language::Hindi:    return "hindi";
        case Language::Hinglish: return "hinglish";
    }
    return "english";
}

const char * persona_name(Persona p) {
    switch (p) {
        case Persona::StandardEnglish:     return "standard_english";
        case Persona::LowStructureEnglish: return "low_structure_english";
        case Persona::CodeMixed:           return "code_mixed";
    }
    return "standard_english";
}

std::optional<Category> category_from_name(const std::string & name) {
    if (name == "transaction_grievance") return Category::TransactionGrievance;
    if (name == "mandate_management")    return Category::MandateManagement;
    if (name == "finance_qna")           return Category::FinanceQnA;
    if (name == "helper")                return Category::Helper;
    if (name == "safety_bias")           return Category::SafetyBias;
    if (name == "identity")              return Category::Identity;
    return std::nullopt;
}

std::optional<Language> language_from_name(const std::string & name) {
    if (name == "english")  return Language::English;
    if (name == "hindi")    return Language::Hindi;
    if (name == "hinglish") return Language::Hinglish;
    return std::nullopt;
}

std::optional<Persona> persona_from_name(const std::string & name) {
    if (name == "standard_english")      return Persona::StandardEnglish;
    if (name == "low_structure_english") return Persona::LowStructureEnglish;
    if (name == "code_mixed")            return Persona::CodeMixed;
    return std::nullopt;
}

const char * parse_error_name(ParseErrorKind k) {
    switch (k) {
        case ParseErrorKind::MalformedJson:    return "malformed_json";
        case ParseErrorKind::UnknownRole:      return "unknown_role";
        case ParseErrorKind::MissingField:     return "missing_field";
        case ParseErrorKind::BadToolCallShape: return "bad_tool_call_shape";
    }
    return "malformed_json";
}

const char * violation_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::EmptyConversation:       return "empty_conversation";
        case ViolationKind::SystemPosition:          return "system_position";
        case ViolationKind::FirstNotUser:            return "first_not_user";
        case ViolationKind::RoleAlternation:         return "role_alternation";
        case ViolationKind::OrphanToolResult:        return "orphan_tool_result";
        case ViolationKind::IncompleteToolResults:   return "incomplete_tool_results";
        case ViolationKind::DuplicateCallId:         return "duplicate_call_id";
        case ViolationKind::UnknownTool:             return "unknown_tool";
        case ViolationKind::UnknownArgument:         return "unknown_argument";
        case ViolationKind::MissingRequiredArgument: return "missing_required_argument";
        case ViolationKind::ArgumentTypeMismatch:    return "argument_type_mismatch";
        case ViolationKind::ToolResultSchema:        return "tool_result_schema";
    }
    return "role_alternation";
}

ToolRegistry::ToolRegistry(std::vector<ToolDefinition> tools) : tools_(std::move(tools)) {
    std::unordered_set<std::string> names;
    for (const auto & t : tools_) {
        if (!names.insert(t.name).second) {
            throw config_error("tool registry: duplicate tool name " + t.name);
        }
        std::unordered_set<std::string> params;
        for (const auto & p : t.parameters) {
            if (!params.insert(p.name).second) {
                throw config_error("tool registry: duplicate parameter " + t.name + "." + p.name);
            }
        }
    }
}

static std::vector<FieldSpec> fields_from_json(const ojson & arr, const std::string & what) {
    std::vector<FieldSpec> out;
    for (const auto & f : arr) {
        FieldSpec spec;
        spec.name = f.at("name").get<std::string>();
        auto type = json_type_from_name(f.at("type").get<std::string>());
        if (!type) {
            throw config_error("tool registry: unknown type in " + what + ": " + f["type"].get<std::string>());
        }
        spec.type = *type;
        spec.required = f.value("required", true);
        out.push_back(std::move(spec));
    }
    return out;
}

ToolRegistry ToolRegistry::from_json(const std::string & json_text) {
    ojson j = ojson::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_array()) {
        throw config_error("tool registry: expected a JSON array");
    }
    std::vector<ToolDefinition> tools;
    for (const auto & t : j) {
        ToolDefinition def;
        def.name = t.at("name").get<std::string>();
        def.description = t.value("description", "");
        def.parameters = fields_from_json(t.value("parameters", ojson::array()), def.name + ".parameters");
        def.result_schema = fields_from_json(t.value("result_schema", ojson::array()), def.name + ".result_schema");
        tools.push_back(std::move(def));
    }
    return ToolRegistry(std::move(tools));
}

std::string ToolRegistry::to_json() const {
    ojson arr = ojson::array();
    for (const auto & t : tools_) {
        ojson jt;
        jt["name"] = t.name;
        jt["description"] = t.description;
        auto dump_fields = [](const std::vector<FieldSpec> & fields) {
            ojson out = ojson::array();
            for (const auto & f : fields) {
                out.push_back({{"name", f.name}, {"type", json_type_name(f.type)}, {"required", f.required}});
            }
            return out;
        };
        jt["parameters"] = dump_fields(t.parameters);
        jt["result_schema"] = dump_fields(t.result_schema);
        arr.push_back(std::move(jt));
    }
    return arr.dump();
}

const ToolDefinition * ToolRegistry::find(const std::string & name) const {
    for (const auto & t : tools_) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

std::string canonical_json(const std::string & json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) {
        throw data_error("canonical_json: malformed input");
    }
    return j.dump(); // nlohmann::json keeps object keys sorted
}

std::string ConversationSample::to_json() const {
    ojson j;
    if (!id.empty()) {
        j["id"] = id;
    }
    j["messages"] = ojson::array();
    for (const auto & m : messages) {
        ojson jm;
        jm["role"] = role_name(m.role);
        jm["content"] = m.content;
        if (!m.tool_calls.empty()) {
            jm["tool_calls"] = ojson::array();
            for (const auto & call : m.tool_calls) {
                jm["tool_calls"].push_back({{"id", call.id},
                                            {"name", call.function_name},
                                            {"arguments", ojson::parse(call.arguments_json)}});
            }
        }
        if (!m.tool_call_id.empty()) {
            jm["tool_call_id"] = m.tool_call_id;
        }
        j["messages"].push_back(std::move(jm));
    }
    j["category"] = category_name(category);
    j["language"] = language_name(language);
    j["persona"] = persona_name(persona);
    return j.dump();
}

std::variant<ConversationSample, std::vector<ParseError>> parse_conversation(const std::string & json_text) {
    std::vector<ParseError> errors;
    ojson j = ojson::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        errors.push_back({ParseErrorKind::MalformedJson, SIZE_MAX, "not a JSON object"});
        return errors;
    }
    ConversationSample sample;
    sample.id = j.value("id", "");
    if (!j.contains("messages") || !j["messages"].is_array()) {
        errors.push_back({ParseErrorKind::MissingField, SIZE_MAX, "\"messages\" array required"});
        return errors;
    }

    auto enum_field = [&](const char * key, auto parser, auto & target) {
        if (!j.contains(key)) {
            return;
        }
        if (!j[key].is_string()) {
            errors.push_back({ParseErrorKind::MissingField, SIZE_MAX, std::string(key) + " must be a string"});
            return;
        }
        auto parsed = parser(j[key].template get<std::string>());
        if (!parsed) {
            errors.push_back(
                {ParseErrorKind::MissingField, SIZE_MAX, std::string(key) + ": unknown value " + j[key].dump()});
            return;
        }
        target = *parsed;
    };
    enum_field("category", category_from_name, sample.category);
    enum_field("language", language_from_name, sample.language);
    enum_field("persona", persona_from_name, sample.persona);

    std::size_t index = 0;
    for (const auto & jm : j["messages"]) {
        Message msg;
        if (!jm.is_object()) {
            errors.push_back({ParseErrorKind::MalformedJson, index, "message is not an object"});
            ++index;
            continue;
        }
        if (!jm.contains("role") || !jm["role"].is_string()) {
            errors.push_back({ParseErrorKind::MissingField, index, "\"role\" required"});
        } else if (auto role = role_from_name(jm["role"].get<std::string>())) {
            msg.role = *role;
        } else {
            errors.push_back({ParseErrorKind::UnknownRole, index, "role: " + jm["role"].dump()});
        }
        if (!jm.contains("content") || !jm["content"].is_string()) {
            errors.push_back({ParseErrorKind::MissingField, index, "\"content\" required"});
        } else {
            msg.content = jm["content"].get<std::string>();
        }
        if (jm.contains("tool_calls")) {
            if (!jm["tool_calls"].is_array() || jm["tool_calls"].empty()) {
                errors.push_back({ParseErrorKind::BadToolCallShape, index, "\"tool_calls\" must be a nonempty array"});
            } else if (msg.role != Role::Assistant) {
                errors.push_back({ParseErrorKind::BadToolCallShape, index, "tool_calls on non-assistant message"});
            } else {
                for (const auto & jc : jm["tool_calls"]) {
                    if (!jc.is_object() || !jc.contains("name") || !jc["name"].is_string() ||
                        !jc.contains("arguments") || !jc["arguments"].is_object()) {
                        errors.push_back(
                            {ParseErrorKind::BadToolCallShape, index, "tool call needs \"name\" and object \"arguments\""});
                        continue;
                    }
                    ToolCallRequest call;
                    call.id = jc.value("id", "");
                    if (call.id.empty()) {
                        errors.push_back({ParseErrorKind::BadToolCallShape, index, "tool call needs nonempty \"id\""});
                        continue;
                    }
                    call.function_name = jc["name"].get<std::string>();
                    call.arguments_json = json(jc["arguments"]).dump();
                    msg.tool_calls.push_back(std::move(call));
                }
            }
        }
        if (msg.role == Role::Tool) {
            if (!jm.contains("tool_call_id") || !jm["tool_call_id"].is_string() ||
                jm["tool_call_id"].get<std::string>().empty()) {
                errors.push_back({ParseErrorKind::MissingField, index, "tool message needs \"tool_call_id\""});
            } else {
                msg.tool_call_id = jm["tool_call_id"].get<std::string>();
            }
            json content = json::parse(msg.content, nullptr, false);
            if (content.is_discarded()) {
                errors.push_back({ParseErrorKind::BadToolCallShape, index, "tool message content is not JSON"});
            }
        }
        sample.messages.push_back(std::move(msg));
        ++index;
    }
    if (sample.messages.empty()) {
        errors.push_back({ParseErrorKind::MissingField, SIZE_MAX, "conversation has no messages"});
    }
    if (!errors.empty()) {
        return errors;
    }
    return sample;
}

bool json_value_matches(const std::string & value_json, JsonType type) {
    json v = json::parse(value_json, nullptr, false);
    if (v.is_discarded()) {
        return false;
    }
    switch (type) {
        case JsonType::String:  return v.is_string();
        case JsonType::Number:  return v.is_number();
        case JsonType::Integer: return v.is_number_integer();
        case JsonType::Boolean: return v.is_boolean();
        case JsonType::Object:  return v.is_object();
        case JsonType::Array:   return v.is_array();
        case JsonType::Null:    return v.is_null();
    }
    return false;
}

static bool value_matches(const json & v, JsonType type) {
    switch (type) {
        case JsonType::String:  return v.is_string();
        case JsonType::Number:  return v.is_number();
        case JsonType::Integer: return v.is_number_integer();
        case JsonType::Boolean: return v.is_boolean();
        case JsonType::Object:  return v.is_object();
        case JsonType::Array:   return v.is_array();
        case JsonType::Null:    return v.is_null();
    }
    return false;
}

static void check_fields(const json & obj, const std::vector<FieldSpec> & schema, bool reject_unknown,
                         std::size_t index, const std::string & owner,
                         ViolationKind missing_kind, ViolationKind type_kind,
                         std::vector<StructureViolation> & out) {
    for (const auto & spec : schema) {
        if (!obj.contains(spec.name)) {
            if (spec.required) {
                out.push_back({missing_kind, index, owner + ": missing \"" + spec.name + "\""});
            }
            continue;
        }
        if (!value_matches(obj[spec.name], spec.type)) {
            out.push_back({type_kind, index,
                           owner + ": \"" + spec.name + "\" expects " + json_type_name(spec.type) + ", got " +
                               obj[spec.name].dump()});
        }
    }
    if (reject_unknown) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = std::any_of(schema.begin(), schema.end(),
                                     [&](const FieldSpec & s) { return s.name == it.key(); });
            if (!known) {
                out.push_back({ViolationKind::UnknownArgument, index, owner + ": unexpected \"" + it.key() + "\""});
            }
        }
    }
}

std::vector<StructureViolation> validate_structure(const ConversationSample & sample, const ToolRegistry & registry) {
    std::vector<StructureViolation> out;
    if (sample.messages.empty()) {
        out.push_back({ViolationKind::EmptyConversation, 0, "no messages"});
        return out;
    }

    // Turn-order automaton. Tool results for one assistant turn may arrive in
    // any order but must be complete before the next assistant turn.
    enum class State { ExpectUser, ExpectAssistant, CollectToolResults };
    State state = State::ExpectUser;
    std::map<std::string, std::string> pending; // call id -> tool name
    bool saw_conversation_turn = false;

    for (std::size_t i = 0; i < sample.messages.size(); ++i) {
        if (sample.messages[i].role != Role::System) {
            saw_conversation_turn = true;
        }
        const Message & msg = sample.messages[i];
        switch (msg.role) {
            case Role::System:
                if (i != 0) {
                    out.push_back({ViolationKind::SystemPosition, i, "system message after position 0"});
                }
                break;
            case Role::User:
                if (i == 0 || (i == 1 && sample.messages[0].role == Role::System)) {
                    // opening user turn
                } else if (state != State::ExpectUser) {
                    out.push_back({ViolationKind::RoleAlternation, i,
                                   state == State::CollectToolResults ? "user turn inside a tool-call exchange"
                                                                      : "consecutive user turns"});
                }
                state = State::ExpectAssistant;
                pending.clear();
                break;
            case Role::Assistant: {
                if (i == 0 || (i == 1 && sample.messages[0].role == Role::System)) {
                    out.push_back({ViolationKind::FirstNotUser, i, "conversation must open with a user turn"});
                } else if (state == State::ExpectUser) {
                    out.push_back({ViolationKind::RoleAlternation, i, "consecutive assistant turns"});
                } else if (state == State::CollectToolResults && !pending.empty()) {
                    std::string ids;
                    for (const auto & [id, _] : pending) {
                        ids += ids.empty() ? id : ", " + id;
                    }
                    out.push_back({ViolationKind::IncompleteToolResults, i, "missing tool results for: " + ids});
                }
                pending.clear();
                for (const auto & call : msg.tool_calls) {
                    const ToolDefinition * def = registry.find(call.function_name);
                    if (!def) {
                        out.push_back({ViolationKind::UnknownTool, i, "tool: " + call.function_name});
                    } else {
                        json args = json::parse(call.arguments_json, nullptr, false);
                        if (args.is_discarded() || !args.is_object()) {
                            out.push_back({ViolationKind::ArgumentTypeMismatch, i,
                                           call.function_name + ": arguments must be a JSON object"});
                        } else {
                            check_fields(args, def->parameters, true, i, call.function_name,
                                         ViolationKind::MissingRequiredArgument,
                                         ViolationKind::ArgumentTypeMismatch, out);
                        }
                    }
                    if (pending.count(call.id)) {
                        out.push_back({ViolationKind::DuplicateCallId, i, "call id: " + call.id});
                    }
                    pending[call.id] = call.function_name;
                }
                state = msg.tool_calls.empty() ? State::ExpectUser : State::CollectToolResults;
                break;
            }
            case Role::Tool: {
                auto it = pending.find(msg.tool_call_id);
                if (state != State::CollectToolResults || it == pending.end()) {
                    out.push_back({ViolationKind::OrphanToolResult, i,
                                   "tool result with no pending call id \"" + msg.tool_call_id + "\""});
                    break;
                }
                const ToolDefinition * def = registry.find(it->second);
                json content = json::parse(msg.content, nullptr, false);
                if (content.is_discarded() || !content.is_object()) {
                    out.push_back({ViolationKind::ToolResultSchema, i, it->second + ": result is not a JSON object"});
                } else if (def) {
                    check_fields(content, def->result_schema, false, i, it->second + " result",
                                 ViolationKind::ToolResultSchema, ViolationKind::ToolResultSchema, out);
                }
                pending.erase(it);
                break;
            }
        }
    }
    if (!pending.empty()) {
        std::string ids;
        for (const auto & [id, _] : pending) {
            ids += ids.empty() ? id : ", " + id;
        }
        out.push_back({ViolationKind::IncompleteToolResults, sample.messages.size() - 1,
                       "conversation ends with pending tool results: " + ids});
    } else if (state == State::CollectToolResults) {
        // results are in but no assistant turn processed them
        out.push_back({ViolationKind::IncompleteToolResults, sample.messages.size() - 1,
                       "conversation ends inside a tool-call exchange"});
    }
    if (!saw_conversation_turn) {
        out.push_back({ViolationKind::FirstNotUser, 0, "conversation has no user turn"});
    }
    return out;
}

std::string render_chat_template(const ConversationSample & sample, const ToolRegistry & registry) {
    auto violations = validate_structure(sample, registry);
    if (!violations.empty()) {
        throw data_error("render_chat_template: sample has " + std::to_string(violations.size()) +
                         " structure violations (first: " + violations[0].detail + ")");
    }
    std::string out;
    if (!registry.empty()) {
        out += "[AVAILABLE_TOOLS]";
        out += registry.to_json();
        out += "[/AVAILABLE_TOOLS]\n";
    }
    for (const auto & msg : sample.messages) {
        switch (msg.role) {
            case Role::System:
                out += "<|system|>";
                out += msg.content;
                break;
            case Role::User:
                out += "<|user|>";
                out += msg.content;
                break;
            case Role::Assistant: {
                out += "<|assistant|>";
                out += msg.content;
                if (!msg.tool_calls.empty()) {
                    ojson calls = ojson::array();
                    for (const auto & call : msg.tool_calls) {
                        calls.push_back({{"id", call.id},
                                         {"name", call.function_name},
                                         {"arguments", json::parse(call.arguments_json)}});
                    }
                    out += "[TOOL_CALLS]";
                    out += calls.dump();
                }
                break;
            }
            case Role::Tool: {
                ojson result;
                result["tool_call_id"] = msg.tool_call_id;
                result["content"] = json::parse(msg.content);
                out += "<|tool|>[TOOL_RESULTS]";
                out += result.dump();
                out += "[/TOOL_RESULTS]";
                break;
            }
        }
        out += '\n';
    }
    return out;
}

Stage1Result stage1_filter(const std::vector<std::string> & raw_json_lines, const ToolRegistry & registry) {
    Stage1Result result;
    result.input_count = raw_json_lines.size();
    for (std::size_t i = 0; i < raw_json_lines.size(); ++i) {
        auto parsed = parse_conversation(raw_json_lines[i]);
        if (auto * errors = std::get_if<std::vector<ParseError>>(&parsed)) {
            Stage1Rejection rej;
            rej.input_index = i;
            for (const auto & e : *errors) {
                rej.reasons.push_back(std::string(parse_error_name(e.kind)) + ": " + e.detail);
            }
            result.rejected.push_back(std::move(rej));
            continue;
        }
        auto & sample = std::get<ConversationSample>(parsed);
        auto violations = validate_structure(sample, registry);
        if (!violations.empty()) {
            Stage1Rejection rej;
            rej.input_index = i;
            rej.sample_id = sample.id;
            for (const auto & v : violations) {
                rej.reasons.push_back(std::string(violation_name(v.kind)) + " at msg " +
                                      std::to_string(v.message_index) + ": " + v.detail);
            }
            result.rejected.push_back(std::move(rej));
            continue;
        }
        result.accepted.push_back(std::move(sample));
    }
    return result;
}

} // namespace fincurate::conversation
