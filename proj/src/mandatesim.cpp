#include "fincurate/mandatesim.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <random>

namespace fincurate::mandatesim {

using json = nlohmann::ordered_json;

const char * mandate_state_name(MandateState s) {
    switch (s) {
        case MandateState::Active:  return "active";
        case MandateState::Paused:  return "paused";
        case MandateState::Revoked: return "revoked";
    }
    return "active";
}

const char * mandate_action_name(MandateAction a) {
    switch (a) {
        case MandateAction::Pause:   return "pause";
        case MandateAction::Unpause: return "unpause";
        case MandateAction::Revoke:  return "revoke";
    }
    return "pause";
}

const char * frequency_name(Frequency f) {
    switch (f) {
        case Frequency::Daily:       return "daily";
        case Frequency::Weekly:      return "weekly";
        case Frequency::Monthly:     return "monthly";
        case Frequency::Quarterly:   return "quarterly";
        case Frequency::Yearly:      return "yearly";
        case Frequency::AsPresented: return "as_presented";
    }
    return "monthly";
}

const char * txn_status_name(TxnStatus s) {
    switch (s) {
        case TxnStatus::Success: return "success";
        case TxnStatus::Failed:  return "failed";
        case TxnStatus::Pending: return "pending";
        case TxnStatus::Deemed:  return "deemed";
    }
    return "success";
}

bool transition_legal(MandateState from, MandateAction action, MandateState & next) {
    switch (action) {
        case MandateAction::Pause:
            if (from == MandateState::Active) {
                next = MandateState::Paused;
                return true;
            }
            return false;
        case MandateAction::Unpause:
            if (from == MandateState::Paused) {
                next = MandateState::Active;
                return true;
            }
            return false;
        case MandateAction::Revoke:
            if (from == MandateState::Active || from == MandateState::Paused) {
                next = MandateState::Revoked;
                return true;
            }
            return false;
    }
    return false;
}

static json mandate_json(const Mandate & m) {
    json j;
    j["umn"] = m.umn;
    j["payee"] = m.payee;
    j["amount"] = m.amount;
    j["frequency"] = frequency_name(m.frequency);
    j["valid_from"] = m.valid_from;
    j["valid_to"] = m.valid_to;
    j["state"] = mandate_state_name(m.state);
    return j;
}

std::string Mandate::to_json() const { return mandate_json(*this).dump(); }

static json txn_json(const TransactionRecord & t) {
    json j;
    j["rrn"] = t.rrn;
    j["amount"] = t.amount;
    j["timestamp"] = t.timestamp;
    j["status"] = txn_status_name(t.status);
    j["counterparty"] = t.counterparty;
    if (t.status == TxnStatus::Failed) {
        j["failure_code"] = t.failure_code;
    }
    j["resolution_timeline"] = "T+2 settlement";
    return j;
}

std::string TransactionRecord::to_json() const { return txn_json(*this).dump(); }

namespace {

const std::array<const char *, 12> kPayees = {
    "Netflix India",     "Spotify",        "Airtel Postpaid", "LIC Premium",
    "Tata Play",         "SIP Bluechip",   "Gym Membership",  "Times Prime",
    "Jio Fiber",         "Amazon Prime",   "Zee5",            "Apollo Insurance",
};

const std::array<const char *, 5> kBanks = {"oksbi", "okaxis", "okhdfc", "okicici", "ybl"};

const std::array<const char *, 8> kMerchants = {
    "Sharma Kirana Store", "IRCTC",        "BigBasket",  "Swiggy",
    "Uber India",          "Dmart Online", "BookMyShow", "Reliance Digital",
};

const std::array<const char *, 5> kFailureCodes = {"U30", "U69", "91", "Z9", "U28"};

std::string hex16(std::mt19937_64 & rng) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

std::string date_str(unsigned year, unsigned month, unsigned day) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04u-%02u-%02u", year, month, day);
    return buf;
}

} // namespace

SimWorld::SimWorld(std::uint64_t seed, std::size_t mandate_count, std::size_t transaction_count) : seed_(seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < mandate_count; ++i) {
        Mandate m;
        m.umn = hex16(rng) + "@" + kBanks[rng() % kBanks.size()];
        m.payee = kPayees[rng() % kPayees.size()];
        m.amount = static_cast<double>(49 + rng() % 4950);
        m.frequency = static_cast<Frequency>(rng() % 6);
        unsigned start_month = 1 + static_cast<unsigned>(rng() % 12);
        m.valid_from = date_str(2024, start_month, 1 + static_cast<unsigned>(rng() % 28));
        m.valid_to = date_str(2026, start_month, 1 + static_cast<unsigned>(rng() % 28));
        // first six mandates pin two per state so every scenario has material
        if (i < 6) {
            m.state = static_cast<MandateState>(i / 2);
        } else {
            std::uint64_t r = rng() % 100;
            m.state = r < 60 ? MandateState::Active : r < 85 ? MandateState::Paused : MandateState::Revoked;
        }
        mandates_.emplace(m.umn, std::move(m));
    }
    for (std::size_t i = 0; i < transaction_count; ++i) {
        TransactionRecord t;
        char rrn[16];
        std::snprintf(rrn, sizeof(rrn), "%012llu", static_cast<unsigned long long>(rng() % 1000000000000ULL));
        t.rrn = rrn;
        t.amount = static_cast<double>(10 + rng() % 25000);
        char ts[32];
        std::snprintf(ts, sizeof(ts), "2025-%02u-%02uT%02u:%02u:%02uZ", 1 + static_cast<unsigned>(rng() % 12),
                      1 + static_cast<unsigned>(rng() % 28), static_cast<unsigned>(rng() % 24),
                      static_cast<unsigned>(rng() % 60), static_cast<unsigned>(rng() % 60));
        t.timestamp = ts;
        // first four transactions pin one per status
        if (i < 4) {
            t.status = static_cast<TxnStatus>(i);
        } else {
            std::uint64_t r = rng() % 100;
            t.status = r < 55 ? TxnStatus::Success : r < 75 ? TxnStatus::Failed : r < 90 ? TxnStatus::Pending
                                                                                         : TxnStatus::Deemed;
        }
        if (t.status == TxnStatus::Failed) {
            t.failure_code = kFailureCodes[rng() % kFailureCodes.size()];
        }
        t.counterparty = kMerchants[rng() % kMerchants.size()];
        transactions_.emplace(t.rrn, std::move(t));
    }
}

const TransactionRecord * SimWorld::get_transaction_details(const std::string & rrn) {
    auto it = transactions_.find(rrn);
    const TransactionRecord * result = it == transactions_.end() ? nullptr : &it->second;
    audit_log_.push_back({"get_transaction_details", json({{"rrn", rrn}}).dump(),
                          result ? result->to_json() : json({{"error", "not_found"}}).dump()});
    return result;
}

std::map<MandateState, std::vector<Mandate>> SimWorld::fetch_mandate_details() {
    std::map<MandateState, std::vector<Mandate>> out;
    out[MandateState::Active];
    out[MandateState::Paused];
    out[MandateState::Revoked];
    for (const auto & [umn, m] : mandates_) {
        out[m.state].push_back(m);
    }
    audit_log_.push_back({"fetch_mandate_details", "{}",
                          json({{"active", out[MandateState::Active].size()},
                                {"paused", out[MandateState::Paused].size()},
                                {"revoked", out[MandateState::Revoked].size()}})
                              .dump()});
    return out;
}

const Mandate * SimWorld::fetch_mandate(const std::string & umn) {
    auto it = mandates_.find(umn);
    const Mandate * result = it == mandates_.end() ? nullptr : &it->second;
    audit_log_.push_back({"fetch_mandate", json({{"umn", umn}}).dump(),
                          result ? result->to_json() : json({{"error", "not_found"}}).dump()});
    return result;
}

std::optional<TransitionError> SimWorld::transition_mandate(const std::string & umn, MandateAction action) {
    auto it = mandates_.find(umn);
    if (it == mandates_.end()) {
        TransitionError err{"not_found", "no mandate with umn " + umn};
        audit_log_.push_back({"transition_mandate", json({{"umn", umn}, {"action", mandate_action_name(action)}}).dump(),
                              json({{"error", err.reason}}).dump()});
        return err;
    }
    MandateState next;
    if (!transition_legal(it->second.state, action, next)) {
        TransitionError err{"illegal_from_state", std::string(mandate_action_name(action)) + " not allowed from " +
                                                      mandate_state_name(it->second.state)};
        audit_log_.push_back({"transition_mandate", json({{"umn", umn}, {"action", mandate_action_name(action)}}).dump(),
                              json({{"error", err.reason}, {"detail", err.detail}}).dump()});
        return err;
    }
    it->second.state = next;
    audit_log_.push_back({"transition_mandate", json({{"umn", umn}, {"action", mandate_action_name(action)}}).dump(),
                          it->second.to_json()});
    return std::nullopt;
}

std::uint64_t SimWorld::state_hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](const std::string & s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto & [umn, m] : mandates_) {
        feed(m.to_json());
    }
    for (const auto & [rrn, t] : transactions_) {
        feed(t.to_json());
    }
    return h;
}

std::string SimWorld::snapshot_json() const {
    json j;
    j["seed"] = seed_;
    j["mandates"] = json::array();
    for (const auto & [umn, m] : mandates_) {
        j["mandates"].push_back(mandate_json(m));
    }
    j["transactions"] = json::array();
    for (const auto & [rrn, t] : transactions_) {
        j["transactions"].push_back(txn_json(t));
    }
    j["audit_log"] = json::array();
    for (const auto & entry : audit_log_) {
        j["audit_log"].push_back({{"op", entry.op},
                                  {"args", json::parse(entry.args_json)},
                                  {"result", json::parse(entry.result_json)}});
    }
    return j.dump(2);
}

std::string SimWorld::tool_result_json(const std::string & tool, const std::string & arguments_json) {
    json args = json::parse(arguments_json, nullptr, false);
    if (args.is_discarded() || !args.is_object()) {
        throw data_error("tool_result_json: arguments must be a JSON object");
    }
    if (tool == "get_transaction_details") {
        const auto * txn = get_transaction_details(args.at("rrn").get<std::string>());
        return txn ? txn->to_json() : json({{"error", "not_found"}}).dump();
    }
    if (tool == "fetch_mandate_details") {
        auto partition = fetch_mandate_details();
        json j;
        auto fill = [&](const char * key, const std::vector<Mandate> & list) {
            j[key] = json::array();
            for (const auto & m : list) {
                j[key].push_back(mandate_json(m));
            }
        };
        fill("active", partition[MandateState::Active]);
        fill("paused", partition[MandateState::Paused]);
        fill("revoked", partition[MandateState::Revoked]);
        return j.dump();
    }
    if (tool == "fetch_mandate") {
        const auto * m = fetch_mandate(args.at("umn").get<std::string>());
        return m ? m->to_json() : json({{"error", "not_found"}}).dump();
    }
    if (tool == "pause_mandate" || tool == "unpause_mandate" || tool == "revoke_mandate") {
        MandateAction action = tool == "pause_mandate"     ? MandateAction::Pause
                               : tool == "unpause_mandate" ? MandateAction::Unpause
                                                           : MandateAction::Revoke;
        std::string umn = args.at("umn").get<std::string>();
        auto before = mandates_.find(umn);
        std::string previous =
            before == mandates_.end() ? "unknown" : mandate_state_name(before->second.state);
        auto err = transition_mandate(umn, action);
        if (err) {
            return json({{"error", err->reason}, {"message", err->detail}}).dump();
        }
        json j;
        j["umn"] = umn;
        j["state"] = mandate_state_name(mandates_.at(umn).state);
        j["previous_state"] = previous;
        j["message"] = std::string("mandate ") + mandate_action_name(action) + " applied";
        return j.dump();
    }
    if (tool == "helper_echo") {
        return json({{"echo", args.at("text").get<std::string>()}}).dump();
    }
    throw data_error("tool_result_json: unknown tool " + tool);
}

conversation::ToolRegistry default_tool_registry() {
    using conversation::FieldSpec;
    using conversation::JsonType;
    using conversation::ToolDefinition;

    std::vector<ToolDefinition> tools;

    ToolDefinition txn;
    txn.name = "get_transaction_details";
    txn.description = "Look up live transaction metadata by retrieval reference number.";
    txn.parameters = {{"rrn", JsonType::String, true}};
    txn.result_schema = {{"rrn", JsonType::String, true},       {"amount", JsonType::Number, true},
                         {"timestamp", JsonType::String, true}, {"status", JsonType::String, true},
                         {"counterparty", JsonType::String, true}, {"failure_code", JsonType::String, false},
                         {"resolution_timeline", JsonType::String, true}};
    tools.push_back(txn);

    ToolDefinition details;
    details.name = "fetch_mandate_details";
    details.description = "List all user mandates grouped by state (active, paused, revoked).";
    details.result_schema = {{"active", JsonType::Array, true},
                             {"paused", JsonType::Array, true},
                             {"revoked", JsonType::Array, true}};
    tools.push_back(details);

    ToolDefinition fetch;
    fetch.name = "fetch_mandate";
    fetch.description = "Fetch one mandate's terms, frequency and validity period.";
    fetch.parameters = {{"umn", JsonType::String, true}};
    fetch.result_schema = {{"umn", JsonType::String, true},       {"payee", JsonType::String, true},
                           {"amount", JsonType::Number, true},    {"frequency", JsonType::String, true},
                           {"valid_from", JsonType::String, true}, {"valid_to", JsonType::String, true},
                           {"state", JsonType::String, true}};
    tools.push_back(fetch);

    auto transition_tool = [](const char * name, const char * description) {
        ToolDefinition t;
        t.name = name;
        t.description = description;
        t.parameters = {{"umn", JsonType::String, true}};
        t.result_schema = {{"umn", JsonType::String, true},
                           {"state", JsonType::String, true},
                           {"previous_state", JsonType::String, true},
                           {"message", JsonType::String, false}};
        return t;
    };
    tools.push_back(transition_tool("pause_mandate", "Suspend an active mandate; deductions halt, configuration kept."));
    tools.push_back(transition_tool("unpause_mandate", "Restore a paused mandate back to active."));
    tools.push_back(transition_tool("revoke_mandate", "Permanently deactivate a mandate; irreversible."));

    ToolDefinition echo;
    echo.name = "helper_echo";
    echo.description = "Generic helper standing in for the helper-tool family.";
    echo.parameters = {{"text", JsonType::String, true}};
    echo.result_schema = {{"echo", JsonType::String, true}};
    tools.push_back(echo);

    return conversation::ToolRegistry(std::move(tools));
}

const char * scenario_name(Scenario s) {
    switch (s) {
        case Scenario::MandateSummary:     return "mandate_summary";
        case Scenario::MandateFetch:       return "mandate_fetch";
        case Scenario::MandatePause:       return "mandate_pause";
        case Scenario::MandateUnpause:     return "mandate_unpause";
        case Scenario::MandateRevoke:      return "mandate_revoke";
        case Scenario::TransactionFailed:  return "transaction_failed";
        case Scenario::TransactionPending: return "transaction_pending";
    }
    return "mandate_summary";
}

std::optional<Scenario> scenario_from_name(const std::string & name) {
    if (name == "mandate_summary")     return Scenario::MandateSummary;
    if (name == "mandate_fetch")       return Scenario::MandateFetch;
    if (name == "mandate_pause")       return Scenario::MandatePause;
    if (name == "mandate_unpause")     return Scenario::MandateUnpause;
    if (name == "mandate_revoke")      return Scenario::MandateRevoke;
    if (name == "transaction_failed")  return Scenario::TransactionFailed;
    if (name == "transaction_pending") return Scenario::TransactionPending;
    return std::nullopt;
}

namespace {

std::string pick_mandate(SimWorld & world, MandateState wanted, std::mt19937_64 & rng) {
    std::vector<std::string> candidates;
    for (const auto & [umn, m] : world.mandates()) {
        if (m.state == wanted) {
            candidates.push_back(umn);
        }
    }
    if (candidates.empty()) {
        throw data_error(std::string("generate_trace: no mandate in state ") + mandate_state_name(wanted));
    }
    return candidates[rng() % candidates.size()];
}

std::string pick_transaction(SimWorld & world, TxnStatus wanted, std::mt19937_64 & rng) {
    std::vector<std::string> candidates;
    for (const auto & [rrn, t] : world.transactions()) {
        if (t.status == wanted) {
            candidates.push_back(rrn);
        }
    }
    if (candidates.empty()) {
        throw data_error(std::string("generate_trace: no transaction with status ") + txn_status_name(wanted));
    }
    return candidates[rng() % candidates.size()];
}

struct PersonaPick {
    conversation::Language language;
    conversation::Persona persona;
};

PersonaPick pick_persona(std::mt19937_64 & rng) {
    switch (rng() % 3) {
        case 0: return {conversation::Language::English, conversation::Persona::StandardEnglish};
        case 1: return {conversation::Language::English, conversation::Persona::LowStructureEnglish};
        default: return {conversation::Language::Hinglish, conversation::Persona::CodeMixed};
    }
}

} // namespace

conversation::ConversationSample generate_trace(SimWorld & world, Scenario scenario, std::uint64_t seed) {
    using conversation::Message;
    using conversation::Role;
    using conversation::ToolCallRequest;

    std::mt19937_64 rng(seed ^ 0xA5A5A5A55A5A5A5AULL);
    PersonaPick pick = pick_persona(rng);

    conversation::ConversationSample sample;
    sample.id = std::string("sim-") + scenario_name(scenario) + "-" + std::to_string(seed);
    sample.language = pick.language;
    sample.persona = pick.persona;

    auto add_user = [&](std::string text) {
        Message m;
        m.role = Role::User;
        m.content = std::move(text);
        sample.messages.push_back(std::move(m));
    };
    auto add_call = [&](std::string text, const std::string & tool, const json & args) {
        Message m;
        m.role = Role::Assistant;
        m.content = std::move(text);
        ToolCallRequest call;
        call.id = "call-" + std::to_string(sample.messages.size() + 1);
        call.function_name = tool;
        call.arguments_json = nlohmann::json(args).dump();
        m.tool_calls.push_back(call);
        sample.messages.push_back(std::move(m));
        // tool content is the simulator's actual output for this call
        std::string content = world.tool_result_json(tool, call.arguments_json);
        Message tool_msg;
        tool_msg.role = Role::Tool;
        tool_msg.tool_call_id = call.id;
        tool_msg.content = content;
        sample.messages.push_back(std::move(tool_msg));
        return content;
    };
    auto add_reply = [&](std::string text) {
        Message m;
        m.role = Role::Assistant;
        m.content = std::move(text);
        sample.messages.push_back(std::move(m));
    };
    bool hinglish = pick.persona == conversation::Persona::CodeMixed;
    bool broken = pick.persona == conversation::Persona::LowStructureEnglish;

    switch (scenario) {
        case Scenario::MandateSummary: {
            sample.category = conversation::Category::MandateManagement;
            add_user(hinglish ? "mere sare autopay mandate dikhao"
                     : broken ? "show mandates all"
                              : "Can you show me all my autopay mandates?");
            auto result = add_call("Let me pull up your mandates.", "fetch_mandate_details", json::object());
            json parsed = json::parse(result);
            add_reply("You have " + std::to_string(parsed["active"].size()) + " active, " +
                      std::to_string(parsed["paused"].size()) + " paused and " +
                      std::to_string(parsed["revoked"].size()) + " revoked mandates.");
            break;
        }
        case Scenario::MandateFetch: {
            sample.category = conversation::Category::MandateManagement;
            std::string umn = pick_mandate(world, MandateState::Active, rng);
            add_user(hinglish ? "is mandate ki details do: " + umn
                     : broken ? "mandate details " + umn
                              : "Please share the details of my mandate " + umn + ".");
            auto result = add_call("Fetching that mandate now.", "fetch_mandate", json{{"umn", umn}});
            json parsed = json::parse(result);
            add_reply("This mandate pays " + parsed["payee"].get<std::string>() + " Rs." +
                      std::to_string(static_cast<long long>(parsed["amount"].get<double>())) + " " +
                      parsed["frequency"].get<std::string>() + ", valid till " +
                      parsed["valid_to"].get<std::string>() + ".");
            break;
        }
        case Scenario::MandatePause: {
            sample.category = conversation::Category::MandateManagement;
            std::string umn = pick_mandate(world, MandateState::Active, rng);
            add_user(hinglish ? "ye autopay abhi ke liye pause karo " + umn
                     : broken ? "pause this mandate " + umn
                              : "Please pause my mandate " + umn + " for now.");
            auto result = add_call("Pausing the mandate.", "pause_mandate", json{{"umn", umn}});
            json parsed = json::parse(result);
            add_reply("Done. The mandate is now " + parsed["state"].get<std::string>() +
                      "; deductions stay on hold until you resume it.");
            break;
        }
        case Scenario::MandateUnpause: {
            sample.category = conversation::Category::MandateManagement;
            std::string umn = pick_mandate(world, MandateState::Paused, rng);
            add_user(hinglish ? "mera paused mandate wapas chalu karo " + umn
                     : broken ? "resume mandate " + umn
                              : "Please resume my paused mandate " + umn + ".");
            auto result = add_call("Resuming the mandate.", "unpause_mandate", json{{"umn", umn}});
            json parsed = json::parse(result);
            add_reply("The mandate is " + parsed["state"].get<std::string>() +
                      " again; scheduled deductions will continue as before.");
            break;
        }
        case Scenario::MandateRevoke: {
            sample.category = conversation::Category::MandateManagement;
            std::string umn = pick_mandate(world, MandateState::Active, rng);
            add_user(hinglish ? "is autopay ko hamesha ke liye band karo " + umn
                     : broken ? "cancel mandate permanently " + umn
                              : "I want to permanently cancel my mandate " + umn + ".");
            auto result = add_call("Revoking the mandate; note this cannot be undone.", "revoke_mandate",
                                   json{{"umn", umn}});
            json parsed = json::parse(result);
            add_reply("The mandate is now " + parsed["state"].get<std::string>() +
                      ". No further deductions will happen and it cannot be reactivated.");
            break;
        }
        case Scenario::TransactionFailed: {
            sample.category = conversation::Category::TransactionGrievance;
            std::string rrn = pick_transaction(world, TxnStatus::Failed, rng);
            add_user(hinglish ? "paisa kat gaya par payment fail dikh raha h, rrn " + rrn
                     : broken ? "payment failed money gone rrn " + rrn
                              : "My payment failed but the money was debited. The RRN is " + rrn + ".");
            auto result = add_call("Let me check that transaction.", "get_transaction_details", json{{"rrn", rrn}});
            json parsed = json::parse(result);
            add_reply("The transaction shows status " + parsed["status"].get<std::string>() + " with error code " +
                      parsed["failure_code"].get<std::string>() +
                      ". If the amount was debited it will auto-reverse within " +
                      parsed["resolution_timeline"].get<std::string>() + ".");
            break;
        }
        case Scenario::TransactionPending: {
            sample.category = conversation::Category::TransactionGrievance;
            std::string rrn = pick_transaction(world, TxnStatus::Pending, rng);
            add_user(hinglish ? "mera transaction pending me atka h, rrn " + rrn
                     : broken ? "txn stuck pending " + rrn
                              : "My transaction has been stuck in pending. The RRN is " + rrn + ".");
            auto result = add_call("Checking the live status.", "get_transaction_details", json{{"rrn", rrn}});
            json parsed = json::parse(result);
            add_reply("The transaction to " + parsed["counterparty"].get<std::string>() +
                      " is still pending confirmation from the beneficiary bank; it will settle or reverse within " +
                      parsed["resolution_timeline"].get<std::string>() + ".");
            break;
        }
    }
    return sample;
}

} // namespace fincurate::mandatesim
