#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cbb/classifier.hpp"
#include "cbb/error.hpp"
#include "cbb/rating.hpp"
#include "cbb/traffic.hpp"

namespace cbb {

/// Per-APN configuration; the volume counter limit applies to the whole
/// PDP session (uplink + downlink across all buckets).
struct ApnProfile {
  std::string apn_id;
  uint64_t volume_limit_bytes = 0;  // 0 = unlimited
  std::optional<std::string> tod_profile_id;
};

/// Hours of the day (0-23) at which a new container begins.
struct TodProfile {
  std::string tod_id;
  std::set<int> cut_hours;
};

enum class CutReason : uint8_t { VOLUME_LIMIT, QOS_CHANGE, TOD_BOUNDARY, FINAL };

inline std::string_view to_string(CutReason r) {
  switch (r) {
    case CutReason::VOLUME_LIMIT: return "VOLUME_LIMIT";
    case CutReason::QOS_CHANGE: return "QOS_CHANGE";
    case CutReason::TOD_BOUNDARY: return "TOD_BOUNDARY";
    case CutReason::FINAL: return "FINAL";
  }
  return "?";
}

inline std::optional<CutReason> parse_cut_reason(const std::string& s) {
  if (s == "VOLUME_LIMIT") return CutReason::VOLUME_LIMIT;
  if (s == "QOS_CHANGE") return CutReason::QOS_CHANGE;
  if (s == "TOD_BOUNDARY") return CutReason::TOD_BOUNDARY;
  if (s == "FINAL") return CutReason::FINAL;
  return std::nullopt;
}

/// One trigger-delimited usage slice of a G-CDR.
struct CdrContainer {
  int seq_no = 0;  // 1-based
  int64_t start_time = 0;
  int64_t end_time = 0;
  std::map<std::string, UsageDelta> usage;                    // bucket -> deltas
  std::map<std::string, std::vector<QuotedEvent>> event_log;  // bucket -> quoted events
  std::map<std::string, Money> charge;                        // bucket -> charge
  std::string qos_profile;
  CutReason cut_reason = CutReason::FINAL;
  bool charged = false;
};

/// Per-PDP-context billing record. Opened at ACTIVATE, cut into containers
/// by the three triggers, closed and rated at DEACTIVATE.
struct GCdr {
  enum class State : uint8_t { OPEN, CLOSED };

  std::string cdr_id;
  std::string context_id;
  std::string subscriber_id;
  std::string apn_profile_id;
  int64_t open_time = 0;
  int64_t close_time = 0;
  std::vector<CdrContainer> containers;  // completed; nascent lives in `current`
  State state = State::OPEN;

  CdrContainer current;         // nascent container while OPEN
  uint64_t volume_counter = 0;  // session bytes since the last volume cut
  int64_t last_clock = 0;       // latest instant processed for TOD cuts
  size_t flushed_count = 0;     // containers already exported mid-session
};

/// Charges one bucket's snapshot for a container spanning [start, end).
using ContainerRater =
    std::function<Money(const std::string& bucket_id, const UsageSnapshot& snapshot,
                        int64_t container_start, int64_t container_end)>;

namespace detail {

inline void seal_current(GCdr& record, CutReason reason, int64_t at) {
  record.current.end_time = at;
  record.current.cut_reason = reason;
  std::string qos = record.current.qos_profile;
  int next_seq = record.current.seq_no + 1;
  record.containers.push_back(std::move(record.current));
  record.current = CdrContainer{};
  record.current.seq_no = next_seq;
  record.current.start_time = at;
  record.current.qos_profile = std::move(qos);
}

inline UsageSnapshot container_snapshot(const GCdr& record, const CdrContainer& c,
                                        const std::string& bucket) {
  UsageSnapshot s;
  s.context_id = record.context_id;
  s.bucket_id = bucket;
  auto u = c.usage.find(bucket);
  if (u != c.usage.end()) {
    s.bytes_total = u->second.bytes();
    s.click_count = u->second.clicks;
    s.download_count = u->second.downloads;
    s.game_count = u->second.games;
    s.active_seconds = u->second.secs;
  }
  auto ev = c.event_log.find(bucket);
  if (ev != c.event_log.end()) s.event_list = ev->second;
  return s;
}

inline void charge_container(GCdr& record, CdrContainer& c, const ContainerRater& rater) {
  if (c.charged) return;
  for (const auto& [bucket, delta] : c.usage) {
    (void)delta;
    c.charge[bucket] = rater(bucket, container_snapshot(record, c, bucket), c.start_time, c.end_time);
  }
  c.charged = true;
}

}  // namespace detail

inline GCdr open_record(const SessionEvent& activate) {
  if (activate.kind != SessionEvent::Kind::ACTIVATE)
    throw Error(Errc::DUPLICATE_OPEN, "open_record needs an ACTIVATE event", activate.ctx);
  GCdr r;
  r.cdr_id = "cdr-" + activate.ctx;
  r.context_id = activate.ctx;
  r.subscriber_id = activate.subscriber;
  r.apn_profile_id = activate.apn;
  r.open_time = activate.ts;
  r.last_clock = activate.ts;
  r.current.seq_no = 1;
  r.current.start_time = activate.ts;
  r.current.qos_profile = activate.qos;
  return r;
}

/// Record usage into the nascent container and run the volume trigger.
/// Returns the number of VOLUME_LIMIT cuts produced (a single oversized
/// packet can produce more than one, one full limit per cut).
inline int account_usage(GCdr& record, const std::string& bucket_id, const UsageDelta& delta,
                         int64_t ts, const ApnProfile& apn,
                         const std::vector<QuotedEvent>& events = {}) {
  if (record.state != GCdr::State::OPEN)
    throw Error(Errc::RECORD_CLOSED, "usage after close", record.context_id);
  record.current.usage[bucket_id] += delta;
  for (const QuotedEvent& ev : events) record.current.event_log[bucket_id].push_back(ev);
  record.volume_counter += delta.bytes();
  int cuts = 0;
  if (apn.volume_limit_bytes > 0) {
    while (record.volume_counter >= apn.volume_limit_bytes) {
      record.volume_counter -= apn.volume_limit_bytes;
      detail::seal_current(record, CutReason::VOLUME_LIMIT, ts);
      ++cuts;
    }
  }
  return cuts;
}

inline void on_qos_change(GCdr& record, const std::string& new_qos, int64_t ts) {
  if (record.state != GCdr::State::OPEN)
    throw Error(Errc::RECORD_CLOSED, "QoS change after close", record.context_id);
  if (new_qos == record.current.qos_profile)
    throw Error(Errc::NO_CHANGE, "QoS label unchanged", record.context_id);
  detail::seal_current(record, CutReason::QOS_CHANGE, ts);
  record.current.qos_profile = new_qos;
}

/// Apply every configured time-of-day boundary crossed since the last
/// processed instant, in chronological order. Returns the number of cuts.
inline int on_clock(GCdr& record, const TodProfile* tod, int64_t now) {
  if (record.state != GCdr::State::OPEN)
    throw Error(Errc::RECORD_CLOSED, "clock tick after close", record.context_id);
  if (now <= record.last_clock) return 0;
  int cuts = 0;
  if (tod && !tod->cut_hours.empty()) {
    constexpr int64_t kHourMs = 3'600'000;
    constexpr int64_t kDayMs = 86'400'000;
    std::set<int64_t> boundaries;
    for (int hour : tod->cut_hours) {
      int64_t candidate = (record.last_clock / kDayMs) * kDayMs + hour * kHourMs;
      while (candidate <= record.last_clock) candidate += kDayMs;
      while (candidate <= now) {
        boundaries.insert(candidate);
        candidate += kDayMs;
      }
    }
    for (int64_t at : boundaries) {
      detail::seal_current(record, CutReason::TOD_BOUNDARY, at);
      ++cuts;
    }
  }
  record.last_clock = now;
  return cuts;
}

/// Seal the final container, rate every container, close the record.
inline void close_record(GCdr& record, int64_t deactivate_ts, const ContainerRater& rater) {
  if (record.state == GCdr::State::CLOSED)
    throw Error(Errc::ALREADY_CLOSED, "record already closed", record.context_id);
  detail::seal_current(record, CutReason::FINAL, deactivate_ts);
  record.current = CdrContainer{};  // no nascent container after close
  record.close_time = deactivate_ts;
  record.state = GCdr::State::CLOSED;
  for (CdrContainer& c : record.containers) detail::charge_container(record, c, rater);
}

/// Hot billing: rate and hand out containers completed since the last
/// flush. The record stays OPEN.
inline std::vector<const CdrContainer*> flush_containers(GCdr& record, const ContainerRater& rater) {
  std::vector<const CdrContainer*> out;
  for (size_t i = record.flushed_count; i < record.containers.size(); ++i) {
    detail::charge_container(record, record.containers[i], rater);
    out.push_back(&record.containers[i]);
  }
  record.flushed_count = record.containers.size();
  return out;
}

/// Records keyed by context; owns the OPEN-record uniqueness invariant.
class CdrBook {
 public:
  GCdr& open(const SessionEvent& activate) {
    if (records_.count(activate.ctx))
      throw Error(Errc::DUPLICATE_OPEN, "context already has a record", activate.ctx);
    return records_.emplace(activate.ctx, open_record(activate)).first->second;
  }

  GCdr& get(const std::string& ctx) {
    auto it = records_.find(ctx);
    if (it == records_.end()) throw Error(Errc::ORPHAN_EVENT, "no record for context", ctx);
    return it->second;
  }

  std::map<std::string, GCdr>& records() { return records_; }
  const std::map<std::string, GCdr>& records() const { return records_; }

 private:
  std::map<std::string, GCdr> records_;
};

// ---------------------------------------------------------------------------
// Ga export (JSONL, canonical key order)

namespace detail {

inline Json container_json(const CdrContainer& c) {
  Json o;
  o["seq"] = c.seq_no;
  o["start"] = c.start_time;
  o["end"] = c.end_time;
  o["reason"] = std::string(to_string(c.cut_reason));
  o["qos"] = c.qos_profile;
  Json usage = Json::object();
  for (const auto& [bucket, d] : c.usage) {
    Json u;
    u["ul"] = d.bytes_ul;
    u["dl"] = d.bytes_dl;
    u["clicks"] = d.clicks;
    u["downloads"] = d.downloads;
    u["games"] = d.games;
    u["events"] = d.events;
    u["secs"] = d.secs;
    usage[bucket] = std::move(u);
  }
  o["usage"] = std::move(usage);
  Json charge = Json::object();
  for (const auto& [bucket, m] : c.charge) {
    Json cj;
    cj["amount"] = m.amount;
    cj["currency"] = m.currency;
    charge[bucket] = std::move(cj);
  }
  o["charge"] = std::move(charge);
  return o;
}

}  // namespace detail

inline Json ga_record_json(const GCdr& record, const std::vector<const CdrContainer*>& containers,
                           bool partial) {
  Json o;
  o["cdr_id"] = record.cdr_id;
  o["ctx"] = record.context_id;
  o["subscriber"] = record.subscriber_id;
  o["apn"] = record.apn_profile_id;
  o["open"] = record.open_time;
  if (partial)
    o["close"] = nullptr;
  else
    o["close"] = record.close_time;
  Json arr = Json::array();
  for (const CdrContainer* c : containers) arr.push_back(detail::container_json(*c));
  o["containers"] = std::move(arr);
  return o;
}

/// One JSONL line per CLOSED record.
inline std::string export_ga(const std::vector<const GCdr*>& records) {
  std::string out;
  for (const GCdr* r : records) {
    if (r->state != GCdr::State::CLOSED)
      throw Error(Errc::OPEN_RECORD, "Ga export needs closed records", r->context_id);
    std::vector<const CdrContainer*> cs;
    for (const CdrContainer& c : r->containers) cs.push_back(&c);
    out += ga_record_json(*r, cs, false).dump();
    out += '\n';
  }
  return out;
}

/// Inverse of export_ga for one line; used by the invoice tool and tests.
inline GCdr parse_ga_record(const std::string& line) {
  Json o = Json::parse(line);
  GCdr r;
  r.cdr_id = o.at("cdr_id").get<std::string>();
  r.context_id = o.at("ctx").get<std::string>();
  r.subscriber_id = o.at("subscriber").get<std::string>();
  r.apn_profile_id = o.at("apn").get<std::string>();
  r.open_time = o.at("open").get<int64_t>();
  r.close_time = o.at("close").is_null() ? 0 : o.at("close").get<int64_t>();
  r.state = o.at("close").is_null() ? GCdr::State::OPEN : GCdr::State::CLOSED;
  for (const Json& cj : o.at("containers")) {
    CdrContainer c;
    c.seq_no = cj.at("seq").get<int>();
    c.start_time = cj.at("start").get<int64_t>();
    c.end_time = cj.at("end").get<int64_t>();
    auto reason = parse_cut_reason(cj.at("reason").get<std::string>());
    if (!reason) throw Error(Errc::MALFORMED_LINE, "bad cut reason");
    c.cut_reason = *reason;
    c.qos_profile = cj.at("qos").get<std::string>();
    for (auto it = cj.at("usage").begin(); it != cj.at("usage").end(); ++it) {
      UsageDelta d;
      d.bytes_ul = it.value().at("ul").get<uint64_t>();
      d.bytes_dl = it.value().at("dl").get<uint64_t>();
      d.clicks = it.value().at("clicks").get<uint64_t>();
      d.downloads = it.value().at("downloads").get<uint64_t>();
      d.games = it.value().at("games").get<uint64_t>();
      d.events = it.value().at("events").get<uint64_t>();
      d.secs = it.value().at("secs").get<uint64_t>();
      c.usage[it.key()] = d;
    }
    for (auto it = cj.at("charge").begin(); it != cj.at("charge").end(); ++it) {
      c.charge[it.key()] =
          Money{it.value().at("amount").get<int64_t>(), it.value().at("currency").get<std::string>()};
    }
    c.charged = true;
    r.containers.push_back(std::move(c));
  }
  return r;
}

// ---------------------------------------------------------------------------
// RADIUS-style accounting export

/// Start, one Interim-Update per non-final container (cumulative octets),
/// and a Stop carrying session totals.
inline std::string export_radius(const std::vector<const GCdr*>& records) {
  std::string out;
  for (const GCdr* r : records) {
    if (r->state != GCdr::State::CLOSED)
      throw Error(Errc::OPEN_RECORD, "RADIUS export needs closed records", r->context_id);
    Json start;
    start["Acct-Status-Type"] = "Start";
    start["Acct-Session-Id"] = r->cdr_id;
    start["ts"] = r->open_time;
    out += start.dump();
    out += '\n';
    uint64_t cum_ul = 0, cum_dl = 0;
    for (size_t i = 0; i < r->containers.size(); ++i) {
      const CdrContainer& c = r->containers[i];
      for (const auto& [bucket, d] : c.usage) {
        (void)bucket;
        cum_ul += d.bytes_ul;
        cum_dl += d.bytes_dl;
      }
      if (c.cut_reason == CutReason::FINAL) continue;
      Json interim;
      interim["Acct-Status-Type"] = "Interim-Update";
      interim["Acct-Session-Id"] = r->cdr_id;
      interim["Acct-Input-Octets"] = cum_ul;
      interim["Acct-Output-Octets"] = cum_dl;
      interim["Acct-Session-Time"] = (c.end_time - r->open_time) / 1000;
      interim["ts"] = c.end_time;
      out += interim.dump();
      out += '\n';
    }
    Json stop;
    stop["Acct-Status-Type"] = "Stop";
    stop["Acct-Session-Id"] = r->cdr_id;
    stop["Acct-Input-Octets"] = cum_ul;
    stop["Acct-Output-Octets"] = cum_dl;
    stop["Acct-Session-Time"] = (r->close_time - r->open_time) / 1000;
    stop["ts"] = r->close_time;
    out += stop.dump();
    out += '\n';
  }
  return out;
}

}  // namespace cbb
