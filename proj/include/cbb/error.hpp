#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cbb {

enum class Errc {
  // trace ingestion
  MALFORMED_LINE,
  ORPHAN_EVENT,
  TIME_REGRESSION,
  // rule compilation
  DUPLICATE_PRIORITY,
  UNKNOWN_BUCKET,
  EMPTY_MATCH,
  // accumulation
  GATED_FLOW,
  // rating
  METHOD_MISMATCH,
  QUOTE_MISSING,
  UNKNOWN_EVENT_CLASS,
  RETROACTIVE_CHANGE,
  CURRENCY_MISMATCH,
  // cdr lifecycle
  DUPLICATE_OPEN,
  RECORD_CLOSED,
  NO_CHANGE,
  ALREADY_CLOSED,
  OPEN_RECORD,
  // online charging
  NOT_PREPAID,
  UNKNOWN_ACCOUNT,
  ALREADY_RETURNED,
  PROTOCOL_VIOLATION,
  // secured charging
  INVALID_CREDENTIAL,
  CHAIN_EXHAUSTED,
  BAD_COMMITMENT_SIG,
  BAD_CREDENTIAL,
  BAD_CHAIN,
  BAD_CLAIM_SIG,
  OVERCLAIM,
  MISMATCHED_COMMITMENT,
  // harness
  CONFIG_INVALID,
  TRACE_INVALID,
};

inline std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::MALFORMED_LINE: return "MALFORMED_LINE";
    case Errc::ORPHAN_EVENT: return "ORPHAN_EVENT";
    case Errc::TIME_REGRESSION: return "TIME_REGRESSION";
    case Errc::DUPLICATE_PRIORITY: return "DUPLICATE_PRIORITY";
    case Errc::UNKNOWN_BUCKET: return "UNKNOWN_BUCKET";
    case Errc::EMPTY_MATCH: return "EMPTY_MATCH";
    case Errc::GATED_FLOW: return "GATED_FLOW";
    case Errc::METHOD_MISMATCH: return "METHOD_MISMATCH";
    case Errc::QUOTE_MISSING: return "QUOTE_MISSING";
    case Errc::UNKNOWN_EVENT_CLASS: return "UNKNOWN_EVENT_CLASS";
    case Errc::RETROACTIVE_CHANGE: return "RETROACTIVE_CHANGE";
    case Errc::CURRENCY_MISMATCH: return "CURRENCY_MISMATCH";
    case Errc::DUPLICATE_OPEN: return "DUPLICATE_OPEN";
    case Errc::RECORD_CLOSED: return "RECORD_CLOSED";
    case Errc::NO_CHANGE: return "NO_CHANGE";
    case Errc::ALREADY_CLOSED: return "ALREADY_CLOSED";
    case Errc::OPEN_RECORD: return "OPEN_RECORD";
    case Errc::NOT_PREPAID: return "NOT_PREPAID";
    case Errc::UNKNOWN_ACCOUNT: return "UNKNOWN_ACCOUNT";
    case Errc::ALREADY_RETURNED: return "ALREADY_RETURNED";
    case Errc::PROTOCOL_VIOLATION: return "PROTOCOL_VIOLATION";
    case Errc::INVALID_CREDENTIAL: return "INVALID_CREDENTIAL";
    case Errc::CHAIN_EXHAUSTED: return "CHAIN_EXHAUSTED";
    case Errc::BAD_COMMITMENT_SIG: return "BAD_COMMITMENT_SIG";
    case Errc::BAD_CREDENTIAL: return "BAD_CREDENTIAL";
    case Errc::BAD_CHAIN: return "BAD_CHAIN";
    case Errc::BAD_CLAIM_SIG: return "BAD_CLAIM_SIG";
    case Errc::OVERCLAIM: return "OVERCLAIM";
    case Errc::MISMATCHED_COMMITMENT: return "MISMATCHED_COMMITMENT";
    case Errc::CONFIG_INVALID: return "CONFIG_INVALID";
    case Errc::TRACE_INVALID: return "TRACE_INVALID";
  }
  return "UNKNOWN";
}

/// Engine-wide exception type. `where` carries the offending id, file or
/// line number when one exists.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail, std::string where = {})
      : std::runtime_error(std::string(to_string(code)) +
                           (where.empty() ? "" : " [" + where + "]") +
                           (detail.empty() ? "" : ": " + detail)),
        code_(code),
        detail_(std::move(detail)),
        where_(std::move(where)) {}

  Errc code() const { return code_; }
  const std::string& detail() const { return detail_; }
  const std::string& where() const { return where_; }

 private:
  Errc code_;
  std::string detail_;
  std::string where_;
};

}  // namespace cbb
