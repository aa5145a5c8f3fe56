#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbb/error.hpp"
#include "cbb/money.hpp"
#include "cbb/net.hpp"

namespace cbb {

using Json = nlohmann::ordered_json;

enum class Direction : uint8_t { UPLINK, DOWNLINK };
enum class PaymentMode : uint8_t { POSTPAID, PREPAID };

/// One timestamped unit of bearer traffic. `url` and `app_tag` carry
/// deep-inspection metadata supplied by the trace producer.
struct PacketEvent {
  int64_t ts = 0;  // milliseconds since simulation epoch
  Ipv4 src;
  Ipv4 dst;
  uint16_t sport = 0;
  uint16_t dport = 0;
  Protocol proto;
  Direction dir = Direction::UPLINK;
  uint64_t bytes = 0;
  std::optional<std::string> url;
  std::optional<std::string> app_tag;

  friend bool operator==(const PacketEvent&, const PacketEvent&) = default;
};

/// Packet-data session. One ACTIVE interval per context; the payment mode
/// is fixed for the context lifetime.
struct PdpContext {
  std::string context_id;
  std::string subscriber_id;
  std::string apn_profile_id;
  std::string qos_profile;
  PaymentMode payment_mode = PaymentMode::POSTPAID;
  enum class State : uint8_t { ACTIVE, DEACTIVATED };
  State state = State::ACTIVE;
  int64_t activation_time = 0;
  int64_t deactivation_time = 0;
};

/// One trace line. PACKET carries a PacketEvent; ACTIVATE carries the
/// session attributes; EVENT carries a billable content event; TOPUP is a
/// subscriber-scoped account replenishment.
struct SessionEvent {
  enum class Kind : uint8_t { ACTIVATE, PACKET, QOS_CHANGE, DEACTIVATE, EVENT, TOPUP };

  Kind kind = Kind::PACKET;
  std::string ctx;  // empty for TOPUP
  int64_t ts = 0;

  // PACKET
  PacketEvent packet;
  // ACTIVATE
  std::string subscriber;
  std::string apn;
  std::string qos;  // also QOS_CHANGE
  PaymentMode mode = PaymentMode::POSTPAID;
  // EVENT
  std::string event_id;
  std::string event_class;
  std::string bucket;
  // TOPUP (subscriber reused)
  int64_t amount = 0;

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

inline std::string_view to_string(SessionEvent::Kind k) {
  switch (k) {
    case SessionEvent::Kind::ACTIVATE: return "ACTIVATE";
    case SessionEvent::Kind::PACKET: return "PACKET";
    case SessionEvent::Kind::QOS_CHANGE: return "QOS_CHANGE";
    case SessionEvent::Kind::DEACTIVATE: return "DEACTIVATE";
    case SessionEvent::Kind::EVENT: return "EVENT";
    case SessionEvent::Kind::TOPUP: return "TOPUP";
  }
  return "?";
}

enum class TraceFormat { JSONL };

struct IngestResult {
  std::vector<SessionEvent> events;
  std::vector<std::string> warnings;
};

namespace detail {

inline const Json* find(const Json& o, const char* key) {
  auto it = o.find(key);
  return it == o.end() ? nullptr : &*it;
}

inline std::string req_string(const Json& o, const char* key, size_t line) {
  const Json* v = find(o, key);
  if (!v || !v->is_string())
    throw Error(Errc::MALFORMED_LINE, std::string("missing string field '") + key + "'",
                "line " + std::to_string(line));
  return v->get<std::string>();
}

inline int64_t req_int(const Json& o, const char* key, size_t line) {
  const Json* v = find(o, key);
  if (!v || !v->is_number_integer())
    throw Error(Errc::MALFORMED_LINE, std::string("missing integer field '") + key + "'",
                "line " + std::to_string(line));
  return v->get<int64_t>();
}

inline Protocol parse_proto(const Json& v, size_t line) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "TCP") return Protocol::tcp();
    if (s == "UDP") return Protocol::udp();
    throw Error(Errc::MALFORMED_LINE, "unknown protocol '" + s + "'", "line " + std::to_string(line));
  }
  if (v.is_number_integer()) {
    int64_t code = v.get<int64_t>();
    if (code < 0 || code > 255)
      throw Error(Errc::MALFORMED_LINE, "protocol code out of range", "line " + std::to_string(line));
    if (code == 6) return Protocol::tcp();
    if (code == 17) return Protocol::udp();
    return Protocol::other(static_cast<uint8_t>(code));
  }
  throw Error(Errc::MALFORMED_LINE, "bad protocol field", "line " + std::to_string(line));
}

}  // namespace detail

inline SessionEvent parse_trace_line(const std::string& line, size_t line_no,
                                     std::vector<std::string>* warnings = nullptr) {
  Json o = Json::parse(line, nullptr, false);
  if (o.is_discarded() || !o.is_object())
    throw Error(Errc::MALFORMED_LINE, "not a JSON object", "line " + std::to_string(line_no));

  static const std::map<std::string, std::vector<std::string>> known_fields = {
      {"ACTIVATE", {"kind", "ctx", "ts", "subscriber", "apn", "qos", "mode"}},
      {"PACKET", {"kind", "ctx", "ts", "src", "dst", "sport", "dport", "proto", "dir", "bytes", "url", "app_tag"}},
      {"QOS_CHANGE", {"kind", "ctx", "ts", "qos"}},
      {"DEACTIVATE", {"kind", "ctx", "ts"}},
      {"EVENT", {"kind", "ctx", "ts", "event_id", "class", "bucket"}},
      {"TOPUP", {"kind", "subscriber", "ts", "amount"}},
  };

  SessionEvent ev;
  const std::string kind = detail::req_string(o, "kind", line_no);
  ev.ts = detail::req_int(o, "ts", line_no);

  auto ctx_of = [&] { return detail::req_string(o, "ctx", line_no); };

  if (kind == "ACTIVATE") {
    ev.kind = SessionEvent::Kind::ACTIVATE;
    ev.ctx = ctx_of();
    ev.subscriber = detail::req_string(o, "subscriber", line_no);
    ev.apn = detail::req_string(o, "apn", line_no);
    ev.qos = detail::req_string(o, "qos", line_no);
    const std::string mode = detail::req_string(o, "mode", line_no);
    if (mode == "POSTPAID")
      ev.mode = PaymentMode::POSTPAID;
    else if (mode == "PREPAID")
      ev.mode = PaymentMode::PREPAID;
    else
      throw Error(Errc::MALFORMED_LINE, "bad mode '" + mode + "'", "line " + std::to_string(line_no));
  } else if (kind == "PACKET") {
    ev.kind = SessionEvent::Kind::PACKET;
    ev.ctx = ctx_of();
    PacketEvent& p = ev.packet;
    p.ts = ev.ts;
    auto src = parse_ipv4(detail::req_string(o, "src", line_no));
    auto dst = parse_ipv4(detail::req_string(o, "dst", line_no));
    if (!src || !dst)
      throw Error(Errc::MALFORMED_LINE, "bad IPv4 address", "line " + std::to_string(line_no));
    p.src = *src;
    p.dst = *dst;
    int64_t sport = detail::req_int(o, "sport", line_no);
    int64_t dport = detail::req_int(o, "dport", line_no);
    if (sport < 0 || sport > 65535 || dport < 0 || dport > 65535)
      throw Error(Errc::MALFORMED_LINE, "port out of range", "line " + std::to_string(line_no));
    p.sport = static_cast<uint16_t>(sport);
    p.dport = static_cast<uint16_t>(dport);
    const Json* proto = detail::find(o, "proto");
    if (!proto) throw Error(Errc::MALFORMED_LINE, "missing proto", "line " + std::to_string(line_no));
    p.proto = detail::parse_proto(*proto, line_no);
    const std::string dir = detail::req_string(o, "dir", line_no);
    if (dir == "UL")
      p.dir = Direction::UPLINK;
    else if (dir == "DL")
      p.dir = Direction::DOWNLINK;
    else
      throw Error(Errc::MALFORMED_LINE, "bad dir '" + dir + "'", "line " + std::to_string(line_no));
    int64_t bytes = detail::req_int(o, "bytes", line_no);
    if (bytes < 0)
      throw Error(Errc::MALFORMED_LINE, "negative bytes", "line " + std::to_string(line_no));
    p.bytes = static_cast<uint64_t>(bytes);
    if (const Json* u = detail::find(o, "url")) {
      if (!u->is_string())
        throw Error(Errc::MALFORMED_LINE, "bad url field", "line " + std::to_string(line_no));
      p.url = u->get<std::string>();
      // deep-inspection metadata on a non-TCP packet is suspicious, not fatal
      if (warnings && p.proto.kind != Protocol::Kind::TCP)
        warnings->push_back("line " + std::to_string(line_no) + ": url present on non-TCP packet");
    }
    if (const Json* t = detail::find(o, "app_tag")) {
      if (!t->is_string())
        throw Error(Errc::MALFORMED_LINE, "bad app_tag field", "line " + std::to_string(line_no));
      p.app_tag = t->get<std::string>();
    }
  } else if (kind == "QOS_CHANGE") {
    ev.kind = SessionEvent::Kind::QOS_CHANGE;
    ev.ctx = ctx_of();
    ev.qos = detail::req_string(o, "qos", line_no);
  } else if (kind == "DEACTIVATE") {
    ev.kind = SessionEvent::Kind::DEACTIVATE;
    ev.ctx = ctx_of();
  } else if (kind == "EVENT") {
    ev.kind = SessionEvent::Kind::EVENT;
    ev.ctx = ctx_of();
    ev.event_id = detail::req_string(o, "event_id", line_no);
    ev.event_class = detail::req_string(o, "class", line_no);
    ev.bucket = detail::req_string(o, "bucket", line_no);
  } else if (kind == "TOPUP") {
    ev.kind = SessionEvent::Kind::TOPUP;
    ev.subscriber = detail::req_string(o, "subscriber", line_no);
    ev.amount = detail::req_int(o, "amount", line_no);
  } else {
    throw Error(Errc::MALFORMED_LINE, "unknown kind '" + kind + "'", "line " + std::to_string(line_no));
  }

  if (warnings) {
    const auto& known = known_fields.at(std::string(to_string(ev.kind)));
    for (auto it = o.begin(); it != o.end(); ++it) {
      bool found = false;
      for (const auto& k : known)
        if (k == it.key()) {
          found = true;
          break;
        }
      if (!found)
        warnings->push_back("line " + std::to_string(line_no) + ": ignoring unknown field '" + it.key() + "'");
    }
  }
  return ev;
}

inline Json to_json(const SessionEvent& ev) {
  Json o;
  o["kind"] = std::string(to_string(ev.kind));
  switch (ev.kind) {
    case SessionEvent::Kind::ACTIVATE:
      o["ctx"] = ev.ctx;
      o["ts"] = ev.ts;
      o["subscriber"] = ev.subscriber;
      o["apn"] = ev.apn;
      o["qos"] = ev.qos;
      o["mode"] = ev.mode == PaymentMode::PREPAID ? "PREPAID" : "POSTPAID";
      break;
    case SessionEvent::Kind::PACKET: {
      const PacketEvent& p = ev.packet;
      o["ctx"] = ev.ctx;
      o["ts"] = ev.ts;
      o["src"] = format_ipv4(p.src);
      o["dst"] = format_ipv4(p.dst);
      o["sport"] = p.sport;
      o["dport"] = p.dport;
      if (p.proto.kind == Protocol::Kind::TCP)
        o["proto"] = "TCP";
      else if (p.proto.kind == Protocol::Kind::UDP)
        o["proto"] = "UDP";
      else
        o["proto"] = p.proto.code;
      o["dir"] = p.dir == Direction::UPLINK ? "UL" : "DL";
      o["bytes"] = p.bytes;
      if (p.url) o["url"] = *p.url;
      if (p.app_tag) o["app_tag"] = *p.app_tag;
      break;
    }
    case SessionEvent::Kind::QOS_CHANGE:
      o["ctx"] = ev.ctx;
      o["ts"] = ev.ts;
      o["qos"] = ev.qos;
      break;
    case SessionEvent::Kind::DEACTIVATE:
      o["ctx"] = ev.ctx;
      o["ts"] = ev.ts;
      break;
    case SessionEvent::Kind::EVENT:
      o["ctx"] = ev.ctx;
      o["ts"] = ev.ts;
      o["event_id"] = ev.event_id;
      o["class"] = ev.event_class;
      o["bucket"] = ev.bucket;
      break;
    case SessionEvent::Kind::TOPUP:
      o["subscriber"] = ev.subscriber;
      o["ts"] = ev.ts;
      o["amount"] = ev.amount;
      break;
  }
  return o;
}

/// Single-pass stream ingestion. Events come back in input order; per-context
/// timestamp regressions and packets for never-activated contexts are hard
/// errors, everything else is left to validate_session.
inline IngestResult ingest_trace(std::istream& in, TraceFormat format = TraceFormat::JSONL) {
  (void)format;  // JSONL is the only trace grammar
  IngestResult result;
  std::string line;
  size_t line_no = 0;
  std::map<std::string, int64_t> last_ts;
  std::map<std::string, bool> activated;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    SessionEvent ev = parse_trace_line(line, line_no, &result.warnings);
    if (!ev.ctx.empty()) {
      if (ev.kind == SessionEvent::Kind::ACTIVATE) {
        activated[ev.ctx] = true;
      } else if (ev.kind != SessionEvent::Kind::TOPUP && !activated.count(ev.ctx)) {
        if (ev.kind == SessionEvent::Kind::PACKET)
          throw Error(Errc::ORPHAN_EVENT, "packet before ACTIVATE", ev.ctx);
        throw Error(Errc::ORPHAN_EVENT, std::string(to_string(ev.kind)) + " before ACTIVATE", ev.ctx);
      }
      auto it = last_ts.find(ev.ctx);
      if (it != last_ts.end() && ev.ts < it->second)
        throw Error(Errc::TIME_REGRESSION, "timestamp went backwards",
                    ev.ctx + ", line " + std::to_string(line_no));
      last_ts[ev.ctx] = ev.ts;
    }
    result.events.push_back(std::move(ev));
  }
  return result;
}

inline std::string serialize_trace(const std::vector<SessionEvent>& events) {
  std::string out;
  for (const auto& ev : events) {
    out += to_json(ev).dump();
    out += '\n';
  }
  return out;
}

struct Violation {
  size_t event_index = 0;
  std::string ctx;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

/// Pure invariant check over an event sequence; violations are data, not
/// errors.
inline ValidationReport validate_session(const std::vector<SessionEvent>& events) {
  ValidationReport report;
  struct CtxState {
    bool activated = false;
    bool deactivated = false;
    std::string qos;
    int64_t last_ts = 0;
    bool seen = false;
  };
  std::map<std::string, CtxState> ctxs;

  auto flag = [&](size_t i, const std::string& ctx, std::string msg) {
    report.violations.push_back({i, ctx, std::move(msg)});
  };

  for (size_t i = 0; i < events.size(); ++i) {
    const SessionEvent& ev = events[i];
    if (ev.kind == SessionEvent::Kind::TOPUP) {
      if (ev.amount < 0) flag(i, "", "negative top-up amount");
      continue;
    }
    CtxState& st = ctxs[ev.ctx];
    if (st.seen && ev.ts < st.last_ts) flag(i, ev.ctx, "timestamp regression within context");
    st.last_ts = ev.ts;
    st.seen = true;
    switch (ev.kind) {
      case SessionEvent::Kind::ACTIVATE:
        if (st.activated || st.deactivated)
          flag(i, ev.ctx, "second ACTIVATE for context");
        else {
          st.activated = true;
          st.qos = ev.qos;
        }
        break;
      case SessionEvent::Kind::PACKET:
      case SessionEvent::Kind::EVENT:
        if (!st.activated)
          flag(i, ev.ctx, "event before ACTIVATE");
        else if (st.deactivated)
          flag(i, ev.ctx, "event after deactivation");
        break;
      case SessionEvent::Kind::QOS_CHANGE:
        if (!st.activated)
          flag(i, ev.ctx, "QOS_CHANGE before ACTIVATE");
        else if (st.deactivated)
          flag(i, ev.ctx, "QOS_CHANGE after deactivation");
        else if (ev.qos == st.qos)
          flag(i, ev.ctx, "QOS_CHANGE carries the current profile label");
        else
          st.qos = ev.qos;
        break;
      case SessionEvent::Kind::DEACTIVATE:
        if (!st.activated)
          flag(i, ev.ctx, "DEACTIVATE before ACTIVATE");
        else if (st.deactivated)
          flag(i, ev.ctx, "second DEACTIVATE for context");
        else
          st.deactivated = true;
        break;
      default:
        break;
    }
  }
  for (const auto& [ctx, st] : ctxs) {
    if (st.activated && !st.deactivated)
      report.violations.push_back({events.size(), ctx, "context never deactivated"});
  }
  return report;
}

}  // namespace cbb
