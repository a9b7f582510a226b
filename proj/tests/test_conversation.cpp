#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fincurate/conversation.hpp"
#include "helpers.hpp"

#include <random>
#include <set>

using namespace fincurate;
using namespace fincurate::conversation;

static ToolRegistry test_registry() {
    ToolDefinition balance;
    balance.name = "get_balance";
    balance.parameters = {{"account", JsonType::String, true}};
    balance.result_schema = {{"balance", JsonType::Number, true}};

    ToolDefinition pause;
    pause.name = "pause_mandate";
    pause.parameters = {{"umn", JsonType::String, true}};
    pause.result_schema = {{"umn", JsonType::String, true}, {"state", JsonType::String, true}};

    return ToolRegistry({balance, pause});
}

TEST_CASE("minimal valid user/assistant pair parses") {
    auto parsed = parse_conversation(R"({"messages":[
        {"role":"user","content":"hi"},
        {"role":"assistant","content":"hello"}]})");
    REQUIRE(std::holds_alternative<ConversationSample>(parsed));
    auto & sample = std::get<ConversationSample>(parsed);
    CHECK(sample.messages.size() == 2);
    CHECK(sample.category == Category::FinanceQnA);
}

TEST_CASE("truncated json yields MalformedJson") {
    auto parsed = parse_conversation(R"({"messages":[{"role":"user")");
    REQUIRE(std::holds_alternative<std::vector<ParseError>>(parsed));
    auto & errors = std::get<std::vector<ParseError>>(parsed);
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].kind == ParseErrorKind::MalformedJson);
}

TEST_CASE("tool call without arguments is BadToolCallShape at msg 1") {
    auto parsed = parse_conversation(R"({"messages":[
        {"role":"user","content":"hi"},
        {"role":"assistant","content":"","tool_calls":[{"id":"c1","name":"get_balance"}]}]})");
    REQUIRE(std::holds_alternative<std::vector<ParseError>>(parsed));
    auto & errors = std::get<std::vector<ParseError>>(parsed);
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].kind == ParseErrorKind::BadToolCallShape);
    CHECK(errors[0].message_index == 1);
}

TEST_CASE("parser reports the complete error list, not first-error-only") {
    auto parsed = parse_conversation(R"({"messages":[
        {"role":"queen","content":"hi"},
        {"role":"assistant"},
        {"role":"tool","content":"not json"}]})");
    REQUIRE(std::holds_alternative<std::vector<ParseError>>(parsed));
    auto & errors = std::get<std::vector<ParseError>>(parsed);
    CHECK(errors.size() >= 3); // unknown role, missing content, tool issues
    std::set<ParseErrorKind> kinds;
    for (const auto & e : errors) {
        kinds.insert(e.kind);
    }
    CHECK(kinds.count(ParseErrorKind::UnknownRole));
    CHECK(kinds.count(ParseErrorKind::MissingField));
}

TEST_CASE("metadata enums parse and unknown values fail") {
    auto good = parse_conversation(R"({"messages":[{"role":"user","content":"x"}],
        "category":"mandate_management","language":"hinglish","persona":"code_mixed"})");
    REQUIRE(std::holds_alternative<ConversationSample>(good));
    auto & sample = std::get<ConversationSample>(good);
    CHECK(sample.category == Category::MandateManagement);
    CHECK(sample.language == Language::Hinglish);
    CHECK(sample.persona == Persona::CodeMixed);

    auto bad = parse_conversation(R"({"messages":[{"role":"user","content":"x"}],"category":"sports"})");
    CHECK(std::holds_alternative<std::vector<ParseError>>(bad));
}

static Message user(std::string text) {
    Message m;
    m.role = Role::User;
    m.content = std::move(text);
    return m;
}

static Message assistant(std::string text) {
    Message m;
    m.role = Role::Assistant;
    m.content = std::move(text);
    return m;
}

static Message assistant_call(const std::string & id, const std::string & tool, const std::string & args) {
    Message m;
    m.role = Role::Assistant;
    m.tool_calls.push_back({id, tool, args});
    return m;
}

static Message tool_result(const std::string & id, const std::string & content) {
    Message m;
    m.role = Role::Tool;
    m.tool_call_id = id;
    m.content = content;
    return m;
}

TEST_CASE("consecutive user turns violate role alternation") {
    ConversationSample sample;
    sample.messages = {user("a"), user("b")};
    auto violations = validate_structure(sample, test_registry());
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ViolationKind::RoleAlternation);
    CHECK(violations[0].message_index == 1);
}

TEST_CASE("unregistered tool is flagged") {
    ConversationSample sample;
    sample.messages = {user("send money"), assistant_call("c1", "pay_user", R"({"to":"x"})"),
                       tool_result("c1", R"({"ok":true})"), assistant("done")};
    auto violations = validate_structure(sample, test_registry());
    REQUIRE(!violations.empty());
    CHECK(violations[0].kind == ViolationKind::UnknownTool);
    CHECK(violations[0].message_index == 1);
}

TEST_CASE("wrong argument type on pause_mandate") {
    ConversationSample sample;
    sample.messages = {user("pause it"), assistant_call("c1", "pause_mandate", R"({"umn":7})"),
                       tool_result("c1", R"({"umn":"x","state":"paused"})"), assistant("done")};
    auto violations = validate_structure(sample, test_registry());
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ViolationKind::ArgumentTypeMismatch);
}

TEST_CASE("missing required argument and unknown argument are distinct violations") {
    ConversationSample sample;
    sample.messages = {user("balance?"), assistant_call("c1", "get_balance", R"({"acct":"12"})"),
                       tool_result("c1", R"({"balance":1.0})"), assistant("done")};
    auto violations = validate_structure(sample, test_registry());
    std::set<ViolationKind> kinds;
    for (const auto & v : violations) {
        kinds.insert(v.kind);
    }
    CHECK(kinds.count(ViolationKind::MissingRequiredArgument));
    CHECK(kinds.count(ViolationKind::UnknownArgument));
}

TEST_CASE("tool result must match the declared result schema") {
    ConversationSample sample;
    sample.messages = {user("balance?"), assistant_call("c1", "get_balance", R"({"account":"12"})"),
                       tool_result("c1", R"({"balance":"forty"})"), assistant("done")};
    auto violations = validate_structure(sample, test_registry());
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ViolationKind::ToolResultSchema);
}

TEST_CASE("parallel calls may resolve in any order but must be complete") {
    ConversationSample sample;
    sample.messages = {user("both"),
                       Message{Role::Assistant,
                               "",
                               {{"c1", "get_balance", R"({"account":"a"})"}, {"c2", "get_balance", R"({"account":"b"})"}},
                               ""},
                       tool_result("c2", R"({"balance":2.0})"), tool_result("c1", R"({"balance":1.0})"),
                       assistant("done")};
    CHECK(validate_structure(sample, test_registry()).empty());

    sample.messages.erase(sample.messages.begin() + 3); // drop c1's result
    auto violations = validate_structure(sample, test_registry());
    REQUIRE(!violations.empty());
    CHECK(violations[0].kind == ViolationKind::IncompleteToolResults);
}

TEST_CASE("orphan tool result and mid-conversation system are violations") {
    ConversationSample sample;
    sample.messages = {user("hi"), assistant("hello"), tool_result("cX", R"({"balance":1.0})")};
    auto violations = validate_structure(sample, test_registry());
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ViolationKind::OrphanToolResult);

    ConversationSample sys;
    sys.messages = {user("hi"), Message{Role::System, "late", {}, ""}, assistant("x")};
    auto sys_violations = validate_structure(sys, test_registry());
    REQUIRE(!sys_violations.empty());
    CHECK(sys_violations[0].kind == ViolationKind::SystemPosition);
}

TEST_CASE("valid structure implies render succeeds") {
    ConversationSample sample;
    sample.messages = {user("balance?"), assistant_call("c1", "get_balance", R"({"account":"12"})"),
                       tool_result("c1", R"({"balance":42.5})"), assistant("Your balance is 42.5.")};
    REQUIRE(validate_structure(sample, test_registry()).empty());
    auto rendered = render_chat_template(sample, test_registry());
    CHECK(rendered.find("[AVAILABLE_TOOLS]") != std::string::npos);
    CHECK(rendered.find("[TOOL_CALLS]") != std::string::npos);
    CHECK(rendered.find("[TOOL_RESULTS]") != std::string::npos);
}

TEST_CASE("sample with no tools renders without the available-tools block") {
    ConversationSample sample;
    sample.messages = {user("hi"), assistant("hello")};
    auto rendered = render_chat_template(sample, ToolRegistry());
    CHECK(rendered.find("[AVAILABLE_TOOLS]") == std::string::npos);
    CHECK(rendered == "<|user|>hi\n<|assistant|>hello\n");
}

TEST_CASE("one call and one result render exactly one block each, in order") {
    ConversationSample sample;
    sample.messages = {user("balance?"), assistant_call("c1", "get_balance", R"({"account":"12"})"),
                       tool_result("c1", R"({"balance":42.5})"), assistant("done")};
    auto rendered = render_chat_template(sample, test_registry());
    auto calls_at = rendered.find("[TOOL_CALLS]");
    auto results_at = rendered.find("[TOOL_RESULTS]");
    REQUIRE(calls_at != std::string::npos);
    REQUIRE(results_at != std::string::npos);
    CHECK(calls_at < results_at);
    CHECK(rendered.find("[TOOL_CALLS]", calls_at + 1) == std::string::npos);
    CHECK(rendered.find("[TOOL_RESULTS]", results_at + 1) == std::string::npos);
}

TEST_CASE("golden fixture renders byte-identically") {
    ToolDefinition balance;
    balance.name = "get_balance";
    balance.parameters = {{"account", JsonType::String, true}};
    balance.result_schema = {{"balance", JsonType::Number, true}};
    ToolRegistry registry({balance});

    ConversationSample sample;
    Message sys;
    sys.role = Role::System;
    sys.content = "You are a payments assistant.";
    sample.messages = {sys, user("What is my balance?"), assistant_call("call-1", "get_balance", R"({"account":"12"})"),
                       tool_result("call-1", R"({"balance":42.5})"), assistant("Your balance is 42.5.")};

    auto expected = testutil::read_text(testutil::test_dir() / "golden" / "chat_template.txt");
    REQUIRE(!expected.empty());
    CHECK(render_chat_template(sample, registry) == expected);
}

TEST_CASE("rendering is injective on marker-free samples") {
    std::mt19937_64 rng(123);
    auto registry = test_registry();
    std::set<std::string> seen_renders;
    std::set<std::string> seen_samples;
    for (int round = 0; round < 200; ++round) {
        ConversationSample sample;
        std::size_t turns = 1 + rng() % 3;
        for (std::size_t t = 0; t < turns; ++t) {
            sample.messages.push_back(user("u" + std::to_string(rng() % 8)));
            if (rng() % 2) {
                sample.messages.push_back(
                    assistant_call("c" + std::to_string(t), "get_balance", R"({"account":"a"})"));
                sample.messages.push_back(
                    tool_result("c" + std::to_string(t), R"({"balance":)" + std::to_string(rng() % 4) + "}"));
                sample.messages.push_back(assistant("a" + std::to_string(rng() % 8)));
            } else {
                sample.messages.push_back(assistant("a" + std::to_string(rng() % 8)));
            }
        }
        if (!seen_samples.insert(sample.to_json()).second) {
            continue;
        }
        CHECK(seen_renders.insert(render_chat_template(sample, registry)).second);
    }
}

TEST_CASE("stage1_filter on a 10-sample fixture with 2 planted defects") {
    auto registry = test_registry();
    std::vector<std::string> lines;
    for (int i = 0; i < 8; ++i) {
        ConversationSample sample;
        sample.id = "ok" + std::to_string(i);
        sample.messages = {user("q" + std::to_string(i)), assistant("a")};
        lines.push_back(sample.to_json());
    }
    lines.push_back(R"({"messages":[{"role":"user","content":"a"},{"role":"user","content":"b"}]})");
    lines.push_back("{broken");

    auto result = stage1_filter(lines, registry);
    CHECK(result.input_count == 10);
    CHECK(result.accepted.size() == 8);
    REQUIRE(result.rejected.size() == 2);
    CHECK(result.rejected[0].reasons[0].find("role_alternation") != std::string::npos);
    CHECK(result.rejected[1].reasons[0].find("malformed_json") != std::string::npos);
    CHECK(result.accepted.size() + result.rejected.size() == result.input_count);
}

TEST_CASE("stage1_filter accepts an all-valid fixture") {
    auto registry = test_registry();
    std::vector<std::string> lines;
    for (int i = 0; i < 5; ++i) {
        ConversationSample sample;
        sample.messages = {user("q"), assistant_call("c1", "get_balance", R"({"account":"x"})"),
                           tool_result("c1", R"({"balance":5.0})"), assistant("done")};
        lines.push_back(sample.to_json());
    }
    auto result = stage1_filter(lines, registry);
    CHECK(result.accepted.size() == 5);
    CHECK(result.rejected.empty());
}

// Independent reference: recursive-descent acceptance of the turn grammar
//   conversation := [System] User Assistant exchange*
//   exchange     := (User Assistant) with Assistant optionally expanding to
//                   Assistant(calls) ToolResults... Assistant
// Implemented as a plain index walker, structured differently from the
// validator's single-pass automaton.
namespace reference {

static bool consume_assistant_unit(const std::vector<Message> & msgs, std::size_t & i);

static bool consume_tool_results(const std::vector<Message> & msgs, std::size_t & i,
                                 std::multiset<std::string> pending) {
    while (!pending.empty()) {
        if (i >= msgs.size() || msgs[i].role != Role::Tool) {
            return false;
        }
        auto it = pending.find(msgs[i].tool_call_id);
        if (it == pending.end()) {
            return false;
        }
        pending.erase(it);
        ++i;
    }
    return true;
}

static bool consume_assistant_unit(const std::vector<Message> & msgs, std::size_t & i) {
    if (i >= msgs.size() || msgs[i].role != Role::Assistant) {
        return false;
    }
    std::multiset<std::string> pending;
    for (const auto & call : msgs[i].tool_calls) {
        pending.insert(call.id);
    }
    ++i;
    if (pending.empty()) {
        return true;
    }
    if (!consume_tool_results(msgs, i, pending)) {
        return false;
    }
    return consume_assistant_unit(msgs, i); // assistant must speak after results
}

static bool accepts(const std::vector<Message> & msgs) {
    if (msgs.empty()) {
        return false;
    }
    std::size_t i = 0;
    if (msgs[i].role == Role::System) {
        ++i;
    }
    if (i >= msgs.size() || msgs[i].role != Role::User) {
        return false;
    }
    while (i < msgs.size()) {
        if (msgs[i].role != Role::User) {
            return false;
        }
        ++i;
        if (i >= msgs.size()) {
            return true; // dangling user turn is structurally fine
        }
        if (!consume_assistant_unit(msgs, i)) {
            return false;
        }
    }
    return true;
}

} // namespace reference

TEST_CASE("property: validator matches the reference automaton on random sequences") {
    ToolDefinition echo;
    echo.name = "echo";
    echo.result_schema = {};
    ToolRegistry registry({echo});

    std::mt19937_64 rng(20240);
    std::size_t agreements = 0;
    for (int round = 0; round < 10000; ++round) {
        ConversationSample sample;
        std::size_t n = 1 + rng() % 8;
        std::size_t call_counter = 0;
        std::vector<std::string> open_ids;
        for (std::size_t k = 0; k < n; ++k) {
            switch (rng() % 5) {
                case 0: {
                    Message m;
                    m.role = Role::System;
                    m.content = "s";
                    sample.messages.push_back(m);
                    break;
                }
                case 1:
                    sample.messages.push_back(user("u"));
                    break;
                case 2:
                    sample.messages.push_back(assistant("a"));
                    break;
                case 3: {
                    Message m;
                    m.role = Role::Assistant;
                    std::size_t calls = 1 + rng() % 2;
                    for (std::size_t c = 0; c < calls; ++c) {
                        auto id = "c" + std::to_string(call_counter++);
                        m.tool_calls.push_back({id, "echo", "{}"});
                        open_ids.push_back(id);
                    }
                    sample.messages.push_back(m);
                    break;
                }
                default: {
                    // tool result: usually a pending id, sometimes garbage
                    std::string id = "zz";
                    if (!open_ids.empty() && rng() % 4 != 0) {
                        std::size_t pick = rng() % open_ids.size();
                        id = open_ids[pick];
                        open_ids.erase(open_ids.begin() + pick);
                    }
                    sample.messages.push_back(tool_result(id, "{}"));
                    break;
                }
            }
        }
        bool validator = validate_structure(sample, registry).empty();
        bool oracle = reference::accepts(sample.messages);
        if (validator == oracle) {
            ++agreements;
        } else {
            CAPTURE(sample.to_json());
            CHECK(validator == oracle);
        }
    }
    CHECK(agreements == 10000);
}
