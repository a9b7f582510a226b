#pragma once

#include "fincurate/conversation.hpp"
#include "fincurate/errors.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::mandatesim {

enum class MandateState { Active, Paused, Revoked };
enum class MandateAction { Pause, Unpause, Revoke };
enum class Frequency { Daily, Weekly, Monthly, Quarterly, Yearly, AsPresented };
enum class TxnStatus { Success, Failed, Pending, Deemed };

const char * mandate_state_name(MandateState s);
const char * mandate_action_name(MandateAction a);
const char * frequency_name(Frequency f);
const char * txn_status_name(TxnStatus s);

struct Mandate {
    std::string umn;
    std::string payee;
    double amount = 0.0;
    Frequency frequency = Frequency::Monthly;
    std::string valid_from; // ISO dates, valid_from <= valid_to
    std::string valid_to;
    MandateState state = MandateState::Active;

    std::string to_json() const;
};

struct TransactionRecord {
    std::string rrn;
    double amount = 0.0;
    std::string timestamp;
    TxnStatus status = TxnStatus::Success;
    std::string counterparty;
    std::string failure_code; // present iff status == Failed

    std::string to_json() const;
};

// Legal transitions: Active -Pause-> Paused, Paused -Unpause-> Active,
// Active/Paused -Revoke-> Revoked. Revoked is terminal.
bool transition_legal(MandateState from, MandateAction action, MandateState & next);

struct TransitionError {
    std::string reason; // "not_found" or "illegal_from_state"
    std::string detail;
};

struct AuditEntry {
    std::string op;
    std::string args_json;
    std::string result_json;
};

// Deterministic mock backend: same seed, same state. The audit log observes
// calls and is excluded from state_hash().
class SimWorld {
  public:
    SimWorld(std::uint64_t seed, std::size_t mandate_count = 12, std::size_t transaction_count = 20);

    const TransactionRecord * get_transaction_details(const std::string & rrn);
    std::map<MandateState, std::vector<Mandate>> fetch_mandate_details();
    const Mandate * fetch_mandate(const std::string & umn);
    std::optional<TransitionError> transition_mandate(const std::string & umn, MandateAction action);

    const std::map<std::string, Mandate> & mandates() const { return mandates_; }
    const std::map<std::string, TransactionRecord> & transactions() const { return transactions_; }
    const std::vector<AuditEntry> & audit_log() const { return audit_log_; }
    std::uint64_t seed() const { return seed_; }

    // Digest over mandates and transactions only.
    std::uint64_t state_hash() const;

    std::string snapshot_json() const;

    // Tool result payloads, bit-exact with the registry result schemas.
    std::string tool_result_json(const std::string & tool, const std::string & arguments_json);

  private:
    std::uint64_t seed_;
    std::map<std::string, Mandate> mandates_;
    std::map<std::string, TransactionRecord> transactions_;
    std::vector<AuditEntry> audit_log_;
};

// The six domain tools plus one echo-style helper standing in for the
// helper-tool family, with authored parameter and result schemas.
conversation::ToolRegistry default_tool_registry();

enum class Scenario {
    MandateSummary,
    MandateFetch,
    MandatePause,
    MandateUnpause,
    MandateRevoke,
    TransactionFailed,
    TransactionPending,
};

const char * scenario_name(Scenario s);
std::optional<Scenario> scenario_from_name(const std::string & name);

// Deterministic synthetic conversation for one scenario. Tool message
// contents equal the simulator's actual outputs for the embedded calls, and
// the sample passes Stage I validation against default_tool_registry().
conversation::ConversationSample generate_trace(SimWorld & world, Scenario scenario, std::uint64_t seed);

} // namespace fincurate::mandatesim
