#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cbb/cdr.hpp"
#include "cbb/classifier.hpp"
#include "cbb/config.hpp"
#include "cbb/error.hpp"
#include "cbb/online.hpp"
#include "cbb/rating.hpp"
#include "cbb/traffic.hpp"

namespace cbb {

struct AuditCounters {
  uint64_t deny_packets = 0;
  uint64_t deny_bytes = 0;
  uint64_t gated_packets = 0;
  uint64_t gated_bytes = 0;
  uint64_t gated_events = 0;
};

struct InvoiceLine {
  std::string context_id;
  std::string bucket_id;
  std::string tariff_id;
  PaymentMode mode = PaymentMode::POSTPAID;
  UsageDelta usage;
  Money charge;
};

/// Per-subscriber bill for the run. Prepaid usage shows up as already
/// settled; only postpaid charges are due.
struct Invoice {
  std::string subscriber_id;
  int64_t period_start = 0;
  int64_t period_end = 0;
  std::vector<InvoiceLine> lines;
  Money total;
  Money amount_due;
  Money settled;
};

/// The end-to-end charging pipeline over one trace. Single-threaded and
/// clocked purely by trace timestamps.
class Simulation {
 public:
  explicit Simulation(const EngineConfig& config, int64_t flush_interval_ms = 0)
      : config_(config),
        catalog_(config.tariffs),
        quotes_(config.quote_ttl_ms),
        flush_interval_(flush_interval_ms),
        ocs_(accounts_, catalog_, config.bucket_tariff_map(), config.quanta, quotes_) {
    for (const auto& [sub, balance] : config_.prepaid_accounts)
      accounts_.add(sub, Money{balance, config_.currency});
  }

  void process(const SessionEvent& ev) {
    switch (ev.kind) {
      case SessionEvent::Kind::ACTIVATE: on_activate(ev); break;
      case SessionEvent::Kind::PACKET: on_packet(ev); break;
      case SessionEvent::Kind::QOS_CHANGE: on_qos(ev); break;
      case SessionEvent::Kind::EVENT: on_event(ev); break;
      case SessionEvent::Kind::DEACTIVATE: on_deactivate(ev); break;
      case SessionEvent::Kind::TOPUP: on_topup(ev); break;
    }
    maybe_flush(ev.ts);
  }

  void run(const std::vector<SessionEvent>& events) {
    for (const SessionEvent& ev : events) process(ev);
    finish();
  }

  void finish() {
    for (const auto& [ctx, record] : records_.records()) {
      if (record.state != GCdr::State::CLOSED)
        throw Error(Errc::OPEN_RECORD, "context still open at end of trace", ctx);
    }
    finished_ = true;
  }

  // ----- results ---------------------------------------------------------

  std::vector<const GCdr*> closed_records() const {
    std::vector<const GCdr*> out;
    for (const auto& [ctx, r] : records_.records()) {
      (void)ctx;
      if (r.state == GCdr::State::CLOSED) out.push_back(&r);
    }
    return out;
  }

  /// Ga JSONL: flushed partial lines (hot billing) followed by final lines
  /// carrying the containers not yet exported.
  std::string export_cdrs() const {
    std::string out = flushed_lines_;
    for (const GCdr* r : closed_records()) {
      std::vector<const CdrContainer*> rest;
      for (size_t i = r->flushed_count; i < r->containers.size(); ++i)
        rest.push_back(&r->containers[i]);
      out += ga_record_json(*r, rest, false).dump();
      out += '\n';
    }
    return out;
  }

  std::string export_radius_jsonl() const { return export_radius(closed_records()); }

  std::vector<Invoice> make_invoices() const {
    std::map<std::string, Invoice> by_subscriber;
    for (const GCdr* r : closed_records()) {
      Invoice& inv = by_subscriber[r->subscriber_id];
      if (inv.subscriber_id.empty()) {
        inv.subscriber_id = r->subscriber_id;
        inv.period_start = r->open_time;
        inv.period_end = r->close_time;
        inv.total = Money{0, config_.currency};
        inv.amount_due = Money{0, config_.currency};
        inv.settled = Money{0, config_.currency};
      }
      inv.period_start = std::min(inv.period_start, r->open_time);
      inv.period_end = std::max(inv.period_end, r->close_time);
      const PaymentMode mode = contexts_.at(r->context_id).payment_mode;
      std::map<std::string, InvoiceLine> lines;
      for (const CdrContainer& c : r->containers) {
        for (const auto& [bucket, delta] : c.usage) {
          InvoiceLine& line = lines[bucket];
          if (line.bucket_id.empty()) {
            line.context_id = r->context_id;
            line.bucket_id = bucket;
            line.tariff_id = config_.bucket(bucket).tariff_id;
            line.mode = mode;
            line.charge = Money{0, config_.currency};
          }
          line.usage += delta;
          auto charged = c.charge.find(bucket);
          if (charged != c.charge.end()) line.charge += charged->second;
        }
      }
      for (auto& [bucket, line] : lines) {
        (void)bucket;
        inv.total += line.charge;
        if (mode == PaymentMode::POSTPAID) inv.amount_due += line.charge;
        inv.lines.push_back(std::move(line));
      }
    }
    for (const auto& [sub, settled] : ocs_.settlements()) {
      Invoice& inv = by_subscriber[sub];
      if (inv.subscriber_id.empty()) {
        inv.subscriber_id = sub;
        inv.total = Money{0, config_.currency};
        inv.amount_due = Money{0, config_.currency};
      }
      inv.settled = settled;
    }
    std::vector<Invoice> out;
    for (auto& [sub, inv] : by_subscriber) {
      (void)sub;
      out.push_back(std::move(inv));
    }
    return out;
  }

  Json invoices_json() const {
    Json arr = Json::array();
    for (const Invoice& inv : make_invoices()) {
      Json o;
      o["subscriber"] = inv.subscriber_id;
      o["period"] = Json{{"start", inv.period_start}, {"end", inv.period_end}};
      Json lines = Json::array();
      for (const InvoiceLine& line : inv.lines) {
        Json lj;
        lj["ctx"] = line.context_id;
        lj["bucket"] = line.bucket_id;
        lj["tariff"] = line.tariff_id;
        lj["mode"] = line.mode == PaymentMode::PREPAID ? "PREPAID" : "POSTPAID";
        lj["usage"] = Json{{"ul", line.usage.bytes_ul},     {"dl", line.usage.bytes_dl},
                           {"clicks", line.usage.clicks},   {"downloads", line.usage.downloads},
                           {"games", line.usage.games},     {"events", line.usage.events},
                           {"secs", line.usage.secs}};
        lj["charge"] = Json{{"amount", line.charge.amount}, {"currency", line.charge.currency}};
        lines.push_back(std::move(lj));
      }
      o["lines"] = std::move(lines);
      o["total"] = Json{{"amount", inv.total.amount}, {"currency", inv.total.currency}};
      o["amount_due"] = Json{{"amount", inv.amount_due.amount}, {"currency", inv.amount_due.currency}};
      o["settled"] = Json{{"amount", inv.settled.amount}, {"currency", inv.settled.currency}};
      arr.push_back(std::move(o));
    }
    return Json{{"invoices", std::move(arr)}};
  }

  Json audit_json() const {
    Json o;
    o["deny"] = Json{{"packets", audit_.deny_packets}, {"bytes", audit_.deny_bytes}};
    o["gated"] = Json{{"packets", audit_.gated_packets},
                      {"bytes", audit_.gated_bytes},
                      {"events", audit_.gated_events}};
    const CouponStats& cs = ocs_.stats();
    o["coupons"] = Json{{"requested", cs.requested},
                        {"granted", cs.granted},
                        {"partial", cs.partial},
                        {"denied", cs.denied},
                        {"returned", cs.returned}};
    Json gy = Json::array();
    for (const auto& [req, ans] : gy_log_) gy.push_back(Json{{"request", req}, {"answer", ans}});
    o["gy"] = std::move(gy);
    Json warns = Json::array();
    for (const std::string& w : warnings_) warns.push_back(w);
    o["warnings"] = std::move(warns);
    return o;
  }

  std::string summary() const {
    std::ostringstream out;
    const auto records = closed_records();
    size_t containers = 0;
    for (const GCdr* r : records) containers += r->containers.size();
    Money due{0, config_.currency}, settled{0, config_.currency};
    for (const Invoice& inv : make_invoices()) {
      due += inv.amount_due;
      if (inv.settled.amount != 0) settled += inv.settled;
    }
    out << "contexts: " << records.size() << "\n";
    out << "containers: " << containers << "\n";
    out << "postpaid due: " << due.amount << " " << due.currency << "\n";
    out << "prepaid settled: " << settled.amount << " " << settled.currency << "\n";
    out << "deny drops: " << audit_.deny_packets << " packets / " << audit_.deny_bytes << " bytes\n";
    out << "gated drops: " << audit_.gated_packets << " packets / " << audit_.gated_bytes
        << " bytes / " << audit_.gated_events << " events\n";
    return out.str();
  }

  const AuditCounters& audit() const { return audit_; }
  const BucketStore& bucket_store() const { return store_; }
  const OnlineChargingSystem& ocs() const { return ocs_; }
  const AccountBook& accounts() const { return accounts_; }
  const std::map<std::string, PdpContext>& contexts() const { return contexts_; }
  void add_warnings(std::vector<std::string> warnings) {
    for (auto& w : warnings) warnings_.push_back(std::move(w));
  }

 private:
  // ----- event handlers ---------------------------------------------------

  void on_activate(const SessionEvent& ev) {
    if (!config_.apn_profiles.count(ev.apn))
      throw Error(Errc::TRACE_INVALID, "ACTIVATE references unknown APN profile '" + ev.apn + "'",
                  ev.ctx);
    PdpContext ctx;
    ctx.context_id = ev.ctx;
    ctx.subscriber_id = ev.subscriber;
    ctx.apn_profile_id = ev.apn;
    ctx.qos_profile = ev.qos;
    ctx.payment_mode = ev.mode;
    ctx.activation_time = ev.ts;
    contexts_[ev.ctx] = ctx;
    records_.open(ev);
    if (ev.mode == PaymentMode::PREPAID) {
      if (!accounts_.has(ev.subscriber))
        throw Error(Errc::UNKNOWN_ACCOUNT, "prepaid context without an account", ev.subscriber);
      controllers_.emplace(ev.ctx, CreditController(ev.ctx, ev.subscriber, [this](const GyRequest& r) {
                             GyAnswer a = ocs_.exchange(r);
                             gy_log_.emplace_back(to_json(r), to_json(a));
                             return a;
                           }));
    }
  }

  void on_packet(const SessionEvent& ev) {
    GCdr& record = records_.get(ev.ctx);
    const PdpContext& ctx = context_of(ev.ctx);
    tick_clock(record, ctx, ev.ts);
    FlowAssignment assignment = classify(ev.ctx, ev.packet, config_.rules);
    if (assignment.deny) {
      ++audit_.deny_packets;
      audit_.deny_bytes += ev.packet.bytes;
      return;
    }
    UsageDelta delta = store_.plan_packet(ev.ctx, assignment.bucket_id, ev.packet);
    if (ctx.payment_mode == PaymentMode::PREPAID) {
      const Tariff& tariff = catalog_.effective(config_.bucket(assignment.bucket_id).tariff_id, ev.ts);
      const ChargeUnit unit = charge_unit(tariff.method);
      CreditController& controller = controllers_.at(ev.ctx);
      if (controller.gated(assignment.bucket_id) ||
          controller.consume(assignment.bucket_id, unit, usage_in_unit(delta, unit), ev.ts) ==
              CreditController::Admission::DROPPED) {
        assignment.gated = true;
        ++audit_.gated_packets;
        audit_.gated_bytes += ev.packet.bytes;
        return;
      }
    }
    store_.commit_packet(ev.ctx, assignment.bucket_id, ev.packet, delta);
    account_usage(record, assignment.bucket_id, delta, ev.ts, apn_of(ctx));
  }

  void on_event(const SessionEvent& ev) {
    GCdr& record = records_.get(ev.ctx);
    const PdpContext& ctx = context_of(ev.ctx);
    tick_clock(record, ctx, ev.ts);
    const BucketConfig& bucket = config_.bucket(ev.bucket);
    const Tariff& tariff = catalog_.effective(bucket.tariff_id, ev.ts);
    if (tariff.method != BillingMethod::PER_EVENT_QUOTED)
      throw Error(Errc::TRACE_INVALID, "EVENT for a bucket that is not quoted per event", ev.ctx);
    quotes_.request_quote(ev.bucket, ev.event_id, ev.event_class, tariff, ev.ts);
    if (ctx.payment_mode == PaymentMode::PREPAID) {
      CreditController& controller = controllers_.at(ev.ctx);
      if (controller.gated(ev.bucket) ||
          controller.consume(ev.bucket, ChargeUnit::EVENTS, 1, ev.ts,
                             std::make_pair(ev.event_id, ev.event_class)) ==
              CreditController::Admission::DROPPED) {
        ++audit_.gated_events;
        return;
      }
    }
    const Quote& charged = quotes_.charged_quote(ev.event_id, ev.ts);
    store_.commit_event(ev.ctx, ev.bucket, ev.event_id, charged.price.amount);
    UsageDelta delta = store_.plan_event(charged.price.amount);
    account_usage(record, ev.bucket, delta, ev.ts, apn_of(ctx),
                  {QuotedEvent{ev.event_id, charged.price.amount}});
  }

  void on_qos(const SessionEvent& ev) {
    GCdr& record = records_.get(ev.ctx);
    PdpContext& ctx = contexts_.at(ev.ctx);
    tick_clock(record, ctx, ev.ts);
    on_qos_change(record, ev.qos, ev.ts);
    ctx.qos_profile = ev.qos;
  }

  void on_deactivate(const SessionEvent& ev) {
    GCdr& record = records_.get(ev.ctx);
    PdpContext& ctx = contexts_.at(ev.ctx);
    tick_clock(record, ctx, ev.ts);
    auto controller = controllers_.find(ev.ctx);
    if (controller != controllers_.end()) controller->second.terminate(ev.ts);
    close_record(record, ev.ts, rater());
    ctx.state = PdpContext::State::DEACTIVATED;
    ctx.deactivation_time = ev.ts;
  }

  void on_topup(const SessionEvent& ev) {
    accounts_.get(ev.subscriber).topup(ev.amount);
    for (auto& [ctx, controller] : controllers_) {
      (void)ctx;
      if (controller.subscriber() == ev.subscriber) controller.clear_gates();
    }
  }

  // ----- helpers ----------------------------------------------------------

  const PdpContext& context_of(const std::string& ctx) const {
    auto it = contexts_.find(ctx);
    if (it == contexts_.end()) throw Error(Errc::ORPHAN_EVENT, "unknown context", ctx);
    return it->second;
  }

  const ApnProfile& apn_of(const PdpContext& ctx) const {
    return config_.apn_profiles.at(ctx.apn_profile_id);
  }

  void tick_clock(GCdr& record, const PdpContext& ctx, int64_t now) {
    const ApnProfile& apn = apn_of(ctx);
    const TodProfile* tod = nullptr;
    if (apn.tod_profile_id) tod = &config_.tod_profiles.at(*apn.tod_profile_id);
    on_clock(record, tod, now);
  }

  ContainerRater rater() {
    return [this](const std::string& bucket, const UsageSnapshot& snapshot, int64_t start,
                  int64_t end) {
      const std::string& tariff_id = config_.bucket(bucket).tariff_id;
      UsageSnapshot rated = snapshot;
      rated.tariff_id = tariff_id;
      Money m = rate(rated, catalog_.effective(tariff_id, start));
      catalog_.note_rated(tariff_id, end);
      return m;
    };
  }

  void maybe_flush(int64_t now) {
    if (flush_interval_ <= 0) return;
    if (!flush_anchor_set_) {
      flush_anchor_ = now;
      flush_anchor_set_ = true;
      return;
    }
    while (now - flush_anchor_ >= flush_interval_) {
      flush_anchor_ += flush_interval_;
      for (auto& [ctx, record] : records_.records()) {
        (void)ctx;
        if (record.state != GCdr::State::OPEN) continue;
        auto flushed = flush_containers(record, rater());
        if (!flushed.empty()) {
          flushed_lines_ += ga_record_json(record, flushed, true).dump();
          flushed_lines_ += '\n';
        }
      }
    }
  }

  const EngineConfig& config_;
  TariffCatalog catalog_;  // run-local copy: rating marks advance per run
  QuoteBook quotes_;
  int64_t flush_interval_;
  AccountBook accounts_;
  OnlineChargingSystem ocs_;
  CdrBook records_;
  BucketStore store_;
  std::map<std::string, PdpContext> contexts_;
  std::map<std::string, CreditController> controllers_;
  std::vector<std::pair<Json, Json>> gy_log_;
  std::vector<std::string> warnings_;
  AuditCounters audit_;
  std::string flushed_lines_;
  int64_t flush_anchor_ = 0;
  bool flush_anchor_set_ = false;
  bool finished_ = false;
};

// ---------------------------------------------------------------------------
// CLI-facing driver

struct RunSummary {
  std::string summary_text;
  size_t event_count = 0;
};

/// Load config + trace, run the pipeline, write cdrs.jsonl, radius.jsonl,
/// invoices.json and audit.json into `out_dir`.
inline RunSummary run_simulation(const std::string& config_path, const std::string& trace_path,
                                 const std::string& out_dir, int64_t flush_interval_ms = 0) {
  EngineConfig config = load_config(config_path);

  std::ifstream trace_in(trace_path);
  if (!trace_in) throw Error(Errc::TRACE_INVALID, "cannot open file", trace_path);
  IngestResult trace;
  try {
    trace = ingest_trace(trace_in);
  } catch (const Error& e) {
    throw Error(Errc::TRACE_INVALID, e.what(), trace_path);
  }
  ValidationReport report = validate_session(trace.events);
  if (!report.ok()) {
    const Violation& v = report.violations.front();
    throw Error(Errc::TRACE_INVALID,
                "event " + std::to_string(v.event_index) + ": " + v.message +
                    (report.violations.size() > 1
                         ? " (+" + std::to_string(report.violations.size() - 1) + " more)"
                         : ""),
                v.ctx.empty() ? trace_path : v.ctx);
  }

  Simulation sim(config, flush_interval_ms);
  sim.add_warnings(std::move(trace.warnings));
  sim.run(trace.events);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write_file = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
    if (!out) throw Error(Errc::CONFIG_INVALID, "cannot write output file", name);
    out << content;
  };
  write_file("cdrs.jsonl", sim.export_cdrs());
  write_file("radius.jsonl", sim.export_radius_jsonl());
  write_file("invoices.json", sim.invoices_json().dump(2) + "\n");
  write_file("audit.json", sim.audit_json().dump(2) + "\n");

  return {sim.summary(), trace.events.size()};
}

/// Rebuild invoices from an exported Ga file. Subscribers with a prepaid
/// account in the config are shown as settled; everyone else is billed.
inline Json invoices_from_cdrs(const std::string& cdrs_path, const EngineConfig* config) {
  std::ifstream in(cdrs_path);
  if (!in) throw Error(Errc::TRACE_INVALID, "cannot open file", cdrs_path);
  std::map<std::string, std::vector<GCdr>> by_subscriber;
  std::map<std::string, std::map<int, CdrContainer>> partial;  // cdr_id -> containers by seq
  std::map<std::string, GCdr> partial_header;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    GCdr r = parse_ga_record(line);
    for (CdrContainer& c : r.containers) partial[r.cdr_id][c.seq_no] = std::move(c);
    partial_header[r.cdr_id] = std::move(r);
  }
  for (auto& [cdr_id, containers] : partial) {
    GCdr r = partial_header.at(cdr_id);
    r.containers.clear();
    for (auto& [seq, c] : containers) {
      (void)seq;
      r.containers.push_back(std::move(c));
    }
    by_subscriber[r.subscriber_id].push_back(std::move(r));
  }

  std::string currency = config ? config->currency : "";
  Json arr = Json::array();
  for (const auto& [sub, records] : by_subscriber) {
    const bool prepaid = config && config->prepaid_accounts.count(sub);
    Json lines = Json::array();
    Money total{0, currency};
    int64_t start = records.front().open_time, end = records.front().close_time;
    for (const GCdr& r : records) {
      start = std::min(start, r.open_time);
      end = std::max(end, r.close_time);
      std::map<std::string, std::pair<UsageDelta, Money>> by_bucket;
      for (const CdrContainer& c : r.containers) {
        for (const auto& [bucket, delta] : c.usage) {
          auto& slot = by_bucket[bucket];
          slot.first += delta;
          auto charged = c.charge.find(bucket);
          if (charged != c.charge.end()) slot.second += charged->second;
        }
      }
      for (const auto& [bucket, slot] : by_bucket) {
        Json lj;
        lj["ctx"] = r.context_id;
        lj["bucket"] = bucket;
        lj["mode"] = prepaid ? "PREPAID" : "POSTPAID";
        lj["usage"] = Json{{"ul", slot.first.bytes_ul},     {"dl", slot.first.bytes_dl},
                           {"clicks", slot.first.clicks},   {"downloads", slot.first.downloads},
                           {"games", slot.first.games},     {"events", slot.first.events},
                           {"secs", slot.first.secs}};
        lj["charge"] = Json{{"amount", slot.second.amount}, {"currency", slot.second.currency}};
        total += slot.second;
        lines.push_back(std::move(lj));
      }
    }
    Json o;
    o["subscriber"] = sub;
    o["period"] = Json{{"start", start}, {"end", end}};
    o["lines"] = std::move(lines);
    o["total"] = Json{{"amount", total.amount}, {"currency", total.currency}};
    Money due = prepaid ? Money{0, total.currency} : total;
    o["amount_due"] = Json{{"amount", due.amount}, {"currency", due.currency}};
    o["settled"] = prepaid ? Json{{"amount", total.amount}, {"currency", total.currency}}
                           : Json{{"amount", 0}, {"currency", total.currency}};
    arr.push_back(std::move(o));
  }
  return Json{{"invoices", std::move(arr)}};
}

}  // namespace cbb
