#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cbb/classifier.hpp"
#include "cbb/error.hpp"
#include "cbb/money.hpp"
#include "cbb/rating.hpp"
#include "cbb/traffic.hpp"

namespace cbb {

/// Unit a prepaid grant is measured in. The wire names are lowercase.
enum class ChargeUnit : uint8_t { NONE, BYTES, SECONDS, CLICKS, DOWNLOADS, GAMES, EVENTS };

inline ChargeUnit charge_unit(BillingMethod m) {
  switch (m) {
    case BillingMethod::FREE: return ChargeUnit::NONE;
    case BillingMethod::PER_BYTE: return ChargeUnit::BYTES;
    case BillingMethod::PER_CLICK: return ChargeUnit::CLICKS;
    case BillingMethod::PER_DOWNLOAD: return ChargeUnit::DOWNLOADS;
    case BillingMethod::PER_GAME: return ChargeUnit::GAMES;
    case BillingMethod::PER_EVENT_QUOTED: return ChargeUnit::EVENTS;
    case BillingMethod::PER_SECOND: return ChargeUnit::SECONDS;
  }
  return ChargeUnit::NONE;
}

inline std::string_view to_string(ChargeUnit u) {
  switch (u) {
    case ChargeUnit::NONE: return "none";
    case ChargeUnit::BYTES: return "bytes";
    case ChargeUnit::SECONDS: return "seconds";
    case ChargeUnit::CLICKS: return "clicks";
    case ChargeUnit::DOWNLOADS: return "downloads";
    case ChargeUnit::GAMES: return "games";
    case ChargeUnit::EVENTS: return "events";
  }
  return "?";
}

inline std::optional<ChargeUnit> parse_charge_unit(const std::string& s) {
  if (s == "bytes") return ChargeUnit::BYTES;
  if (s == "seconds") return ChargeUnit::SECONDS;
  if (s == "clicks") return ChargeUnit::CLICKS;
  if (s == "downloads") return ChargeUnit::DOWNLOADS;
  if (s == "games") return ChargeUnit::GAMES;
  if (s == "events") return ChargeUnit::EVENTS;
  if (s == "none") return ChargeUnit::NONE;
  return std::nullopt;
}

/// The part of a planned usage delta measured in `unit`.
inline uint64_t usage_in_unit(const UsageDelta& d, ChargeUnit unit) {
  switch (unit) {
    case ChargeUnit::NONE: return 0;
    case ChargeUnit::BYTES: return d.bytes();
    case ChargeUnit::SECONDS: return d.secs;
    case ChargeUnit::CLICKS: return d.clicks;
    case ChargeUnit::DOWNLOADS: return d.downloads;
    case ChargeUnit::GAMES: return d.games;
    case ChargeUnit::EVENTS: return d.events;
  }
  return 0;
}

/// Grant sizes per unit. Events are always granted one at a time at their
/// quoted price.
struct QuantumConfig {
  uint64_t bytes = 4096;
  uint64_t seconds = 10;
  uint64_t clicks = 1;
  uint64_t downloads = 1;
  uint64_t games = 1;

  uint64_t of(ChargeUnit u) const {
    switch (u) {
      case ChargeUnit::BYTES: return bytes;
      case ChargeUnit::SECONDS: return seconds;
      case ChargeUnit::CLICKS: return clicks;
      case ChargeUnit::DOWNLOADS: return downloads;
      case ChargeUnit::GAMES: return games;
      case ChargeUnit::EVENTS: return 1;
      case ChargeUnit::NONE: return 0;
    }
    return 0;
  }
};

struct PrepaidAccount {
  std::string subscriber_id;
  Money balance;
  Money reserved;

  int64_t available() const { return balance.amount - reserved.amount; }

  void topup(int64_t amount) { balance.amount += amount; }
};

class AccountBook {
 public:
  PrepaidAccount& add(std::string subscriber, Money opening_balance) {
    PrepaidAccount acc;
    acc.subscriber_id = subscriber;
    acc.balance = std::move(opening_balance);
    acc.reserved = Money{0, acc.balance.currency};
    return accounts_.emplace(std::move(subscriber), std::move(acc)).first->second;
  }

  bool has(const std::string& subscriber) const { return accounts_.count(subscriber) != 0; }

  PrepaidAccount& get(const std::string& subscriber) {
    auto it = accounts_.find(subscriber);
    if (it == accounts_.end()) throw Error(Errc::UNKNOWN_ACCOUNT, "no prepaid account", subscriber);
    return it->second;
  }

  const std::map<std::string, PrepaidAccount>& all() const { return accounts_; }

 private:
  std::map<std::string, PrepaidAccount> accounts_;
};

/// Quantized credit grant. `unit_rate` is minor units per granted unit; for
/// quoted events it is the event's quoted price.
struct Coupon {
  std::string coupon_id;
  std::string context_id;
  std::string bucket_id;
  ChargeUnit unit = ChargeUnit::BYTES;
  uint64_t granted_qty = 0;
  int64_t unit_rate = 0;
  int64_t reserved_value = 0;  // granted_qty * unit_rate
  uint64_t consumed = 0;
  enum class State : uint8_t { OUTSTANDING, RETURNED };
  State state = State::OUTSTANDING;

  uint64_t remaining() const { return granted_qty - consumed; }
};

struct GrantResult {
  enum class Kind : uint8_t { OK, PARTIAL, DENIED };
  Kind kind = Kind::DENIED;
  std::optional<Coupon> coupon;
};

/// Atomic check-and-reserve. A full quantum is granted when affordable, a
/// partial final coupon otherwise, DENIED when not even one unit is.
inline GrantResult grant_coupon(PrepaidAccount& account, const std::string& ctx,
                                const std::string& bucket, ChargeUnit unit, int64_t unit_rate,
                                uint64_t quantum_qty, const std::string& coupon_id) {
  uint64_t qty = quantum_qty;
  GrantResult::Kind kind = GrantResult::Kind::OK;
  if (unit_rate > 0) {
    const int64_t avail = account.available();
    const int64_t full_cost = static_cast<int64_t>(quantum_qty) * unit_rate;
    if (avail < full_cost) {
      qty = avail > 0 ? static_cast<uint64_t>(avail / unit_rate) : 0;
      kind = GrantResult::Kind::PARTIAL;
    }
  }
  if (qty == 0) return {GrantResult::Kind::DENIED, std::nullopt};
  Coupon c;
  c.coupon_id = coupon_id;
  c.context_id = ctx;
  c.bucket_id = bucket;
  c.unit = unit;
  c.granted_qty = qty;
  c.unit_rate = unit_rate;
  c.reserved_value = static_cast<int64_t>(qty) * unit_rate;
  account.reserved.amount += c.reserved_value;
  return {kind, std::move(c)};
}

/// Spec surface with the payment-mode and account preconditions enforced.
inline GrantResult request_coupon(AccountBook& accounts, const PdpContext& ctx,
                                  const std::string& bucket, ChargeUnit unit, int64_t unit_rate,
                                  uint64_t quantum_qty, const std::string& coupon_id) {
  if (ctx.payment_mode != PaymentMode::PREPAID)
    throw Error(Errc::NOT_PREPAID, "coupons require a PREPAID context", ctx.context_id);
  PrepaidAccount& account = accounts.get(ctx.subscriber_id);
  return grant_coupon(account, ctx.context_id, bucket, unit, unit_rate, quantum_qty, coupon_id);
}

struct Settlement {
  Money charged;
  Money released;
};

/// Deduct the consumed part, release the rest of the reservation.
inline Settlement return_coupon(PrepaidAccount& account, Coupon& coupon, uint64_t final_usage) {
  if (coupon.state == Coupon::State::RETURNED)
    throw Error(Errc::ALREADY_RETURNED, "coupon settled twice", coupon.coupon_id);
  const uint64_t consumed = std::min(final_usage, coupon.granted_qty);
  const int64_t charge = static_cast<int64_t>(consumed) * coupon.unit_rate;
  account.reserved.amount -= coupon.reserved_value;
  account.balance.amount -= charge;
  coupon.consumed = consumed;
  coupon.state = Coupon::State::RETURNED;
  return {Money{charge, account.balance.currency},
          Money{coupon.reserved_value - charge, account.balance.currency}};
}

// ---------------------------------------------------------------------------
// Gy-style credit-control wire contract

struct GyRequest {
  enum class Type : uint8_t { INITIAL, UPDATE, TERMINATE };
  Type type = Type::INITIAL;
  std::string session;
  std::string subscriber;
  std::string bucket;
  int64_t ts = 0;
  std::optional<std::pair<ChargeUnit, uint64_t>> used;
  std::optional<ChargeUnit> requested;
  // quoted-event grants carry the event being priced
  std::optional<std::pair<std::string, std::string>> event;  // (event_id, class)
  // hand back the bucket's outstanding grants (settle consumed, release rest)
  bool release = false;
};

struct GyAnswer {
  enum class Result : uint8_t { OK, PARTIAL, DENIED };
  Result result = Result::OK;
  ChargeUnit granted_unit = ChargeUnit::NONE;
  uint64_t granted_qty = 0;
  int64_t balance_after = 0;
};

inline std::string_view to_string(GyRequest::Type t) {
  switch (t) {
    case GyRequest::Type::INITIAL: return "INITIAL";
    case GyRequest::Type::UPDATE: return "UPDATE";
    case GyRequest::Type::TERMINATE: return "TERMINATE";
  }
  return "?";
}

inline std::string_view to_string(GyAnswer::Result r) {
  switch (r) {
    case GyAnswer::Result::OK: return "OK";
    case GyAnswer::Result::PARTIAL: return "PARTIAL";
    case GyAnswer::Result::DENIED: return "DENIED";
  }
  return "?";
}

inline Json to_json(const GyRequest& r) {
  Json o;
  o["type"] = std::string(to_string(r.type));
  o["session"] = r.session;
  o["subscriber"] = r.subscriber;
  o["bucket"] = r.bucket;
  o["ts"] = r.ts;
  if (r.used) {
    o["used"] = Json{{"unit", std::string(to_string(r.used->first))}, {"qty", r.used->second}};
  }
  if (r.requested) o["requested"] = Json{{"unit", std::string(to_string(*r.requested))}};
  if (r.event) o["event"] = Json{{"id", r.event->first}, {"class", r.event->second}};
  if (r.release) o["release"] = true;
  return o;
}

inline Json to_json(const GyAnswer& a) {
  Json o;
  o["type"] = "ANSWER";
  o["result"] = std::string(to_string(a.result));
  o["granted"] = Json{{"unit", std::string(to_string(a.granted_unit))}, {"qty", a.granted_qty}};
  o["balance_after"] = a.balance_after;
  return o;
}

inline GyRequest parse_gy_request(const Json& o) {
  GyRequest r;
  const std::string type = o.at("type").get<std::string>();
  if (type == "INITIAL")
    r.type = GyRequest::Type::INITIAL;
  else if (type == "UPDATE")
    r.type = GyRequest::Type::UPDATE;
  else if (type == "TERMINATE")
    r.type = GyRequest::Type::TERMINATE;
  else
    throw Error(Errc::PROTOCOL_VIOLATION, "unknown message type '" + type + "'");
  r.session = o.at("session").get<std::string>();
  if (o.contains("subscriber")) r.subscriber = o.at("subscriber").get<std::string>();
  if (o.contains("bucket")) r.bucket = o.at("bucket").get<std::string>();
  if (o.contains("ts")) r.ts = o.at("ts").get<int64_t>();
  if (o.contains("used")) {
    auto unit = parse_charge_unit(o.at("used").at("unit").get<std::string>());
    if (!unit) throw Error(Errc::PROTOCOL_VIOLATION, "bad used.unit");
    r.used = {{*unit, o.at("used").at("qty").get<uint64_t>()}};
  }
  if (o.contains("requested")) {
    auto unit = parse_charge_unit(o.at("requested").at("unit").get<std::string>());
    if (!unit) throw Error(Errc::PROTOCOL_VIOLATION, "bad requested.unit");
    r.requested = *unit;
  }
  if (o.contains("event"))
    r.event = {{o.at("event").at("id").get<std::string>(), o.at("event").at("class").get<std::string>()}};
  if (o.contains("release")) r.release = o.at("release").get<bool>();
  return r;
}

struct CouponStats {
  uint64_t requested = 0;
  uint64_t granted = 0;
  uint64_t partial = 0;
  uint64_t denied = 0;
  uint64_t returned = 0;
};

/// The online charging system: owns accounts and outstanding coupons, rates
/// prepaid usage, and answers credit-control messages. Coupons draw down
/// oldest-first; exhausted coupons settle immediately, the rest at
/// TERMINATE.
class OnlineChargingSystem {
 public:
  OnlineChargingSystem(AccountBook& accounts, const TariffCatalog& catalog,
                       std::map<std::string, std::string> bucket_tariffs, QuantumConfig quanta,
                       QuoteBook& quotes)
      : accounts_(accounts),
        catalog_(catalog),
        bucket_tariffs_(std::move(bucket_tariffs)),
        quanta_(quanta),
        quotes_(quotes) {}

  GyAnswer exchange(const GyRequest& req) {
    switch (req.type) {
      case GyRequest::Type::INITIAL: {
        if (sessions_.count(req.session))
          throw Error(Errc::PROTOCOL_VIOLATION, "INITIAL for an open session", req.session);
        if (!accounts_.has(req.subscriber))
          throw Error(Errc::UNKNOWN_ACCOUNT, "no prepaid account", req.subscriber);
        sessions_[req.session].subscriber = req.subscriber;
        return serve(req);
      }
      case GyRequest::Type::UPDATE: {
        if (!sessions_.count(req.session))
          throw Error(Errc::PROTOCOL_VIOLATION, "UPDATE before INITIAL", req.session);
        return serve(req);
      }
      case GyRequest::Type::TERMINATE: {
        auto it = sessions_.find(req.session);
        if (it == sessions_.end())
          throw Error(Errc::PROTOCOL_VIOLATION, "TERMINATE without a session", req.session);
        GyAnswer ans = serve(req);
        PrepaidAccount& account = accounts_.get(it->second.subscriber);
        for (auto& [bucket, coupons] : it->second.outstanding) {
          (void)bucket;
          for (Coupon& c : coupons) settle(account, c, c.consumed);
        }
        sessions_.erase(it);
        ans.balance_after = account.balance.amount;
        return ans;
      }
    }
    throw Error(Errc::PROTOCOL_VIOLATION, "unreachable");
  }

  const CouponStats& stats() const { return stats_; }

  Money settled(const std::string& subscriber) const {
    auto it = settled_.find(subscriber);
    return it == settled_.end() ? Money{} : it->second;
  }

  const std::map<std::string, Money>& settlements() const { return settled_; }

  /// Reservation-safety check: outstanding reservations per account.
  int64_t outstanding_reservation(const std::string& subscriber) const {
    int64_t sum = 0;
    for (const auto& [sid, st] : sessions_) {
      (void)sid;
      if (st.subscriber != subscriber) continue;
      for (const auto& [bucket, coupons] : st.outstanding) {
        (void)bucket;
        for (const Coupon& c : coupons) sum += c.reserved_value;
      }
    }
    return sum;
  }

 private:
  struct SessionState {
    std::string subscriber;
    std::map<std::string, std::deque<Coupon>> outstanding;  // bucket -> coupons, oldest first
  };

  void settle(PrepaidAccount& account, Coupon& coupon, uint64_t usage) {
    Settlement s = return_coupon(account, coupon, usage);
    settled_[account.subscriber_id] += s.charged;
    ++stats_.returned;
  }

  /// Apply `used` to the bucket's coupons (oldest first, clamped), then
  /// grant a fresh coupon when one is requested.
  GyAnswer serve(const GyRequest& req) {
    SessionState& session = sessions_.at(req.session);
    PrepaidAccount& account = accounts_.get(session.subscriber);
    GyAnswer ans;
    ans.balance_after = account.balance.amount;
    bool clamped = false;

    if (req.used && req.used->second > 0) {
      uint64_t left = req.used->second;
      auto& coupons = session.outstanding[req.bucket];
      while (left > 0 && !coupons.empty()) {
        Coupon& front = coupons.front();
        const uint64_t take = std::min<uint64_t>(left, front.remaining());
        front.consumed += take;
        left -= take;
        if (front.remaining() == 0) {
          settle(account, front, front.consumed);
          coupons.pop_front();
        }
      }
      if (left > 0) clamped = true;  // reported beyond what was granted
    }

    if (req.release) {
      auto& coupons = session.outstanding[req.bucket];
      for (Coupon& c : coupons) settle(account, c, c.consumed);
      coupons.clear();
    }

    if (req.requested) {
      const ChargeUnit unit = *req.requested;
      int64_t unit_rate = 0;
      if (unit == ChargeUnit::EVENTS) {
        if (!req.event)
          throw Error(Errc::PROTOCOL_VIOLATION, "event grant without event descriptor", req.session);
        const Tariff& tariff = tariff_for(req.bucket, req.ts);
        unit_rate = quotes_.request_quote(req.bucket, req.event->first, req.event->second, tariff, req.ts)
                        .price.amount;
      } else if (unit != ChargeUnit::NONE) {
        unit_rate = tariff_for(req.bucket, req.ts).rate;
      }
      ++stats_.requested;
      GrantResult grant = grant_coupon(account, req.session, req.bucket, unit, unit_rate,
                                       quanta_.of(unit), next_coupon_id());
      ans.granted_unit = unit;
      if (grant.kind == GrantResult::Kind::DENIED) {
        ++stats_.denied;
        ans.result = GyAnswer::Result::DENIED;
        ans.granted_qty = 0;
      } else {
        if (grant.kind == GrantResult::Kind::PARTIAL)
          ++stats_.partial;
        else
          ++stats_.granted;
        ans.result = grant.kind == GrantResult::Kind::PARTIAL ? GyAnswer::Result::PARTIAL
                                                              : GyAnswer::Result::OK;
        ans.granted_qty = grant.coupon->granted_qty;
        session.outstanding[req.bucket].push_back(std::move(*grant.coupon));
      }
    }

    if (clamped && ans.result == GyAnswer::Result::OK) ans.result = GyAnswer::Result::PARTIAL;
    ans.balance_after = account.balance.amount;
    return ans;
  }

  const Tariff& tariff_for(const std::string& bucket, int64_t ts) const {
    auto it = bucket_tariffs_.find(bucket);
    if (it == bucket_tariffs_.end())
      throw Error(Errc::PROTOCOL_VIOLATION, "unknown bucket '" + bucket + "'");
    return catalog_.effective(it->second, ts);
  }

  std::string next_coupon_id() { return "cpn-" + std::to_string(next_coupon_seq_++); }

  AccountBook& accounts_;
  const TariffCatalog& catalog_;
  std::map<std::string, std::string> bucket_tariffs_;
  QuantumConfig quanta_;
  QuoteBook& quotes_;
  std::map<std::string, SessionState> sessions_;
  std::map<std::string, Money> settled_;
  CouponStats stats_;
  uint64_t next_coupon_seq_ = 1;
};

using GyExchange = std::function<GyAnswer(const GyRequest&)>;

/// GGSN-side credit state for one prepaid PDP context. Tracks per-bucket
/// remaining grants and gates, speaks the Gy contract through an injected
/// exchange function.
class CreditController {
 public:
  CreditController(std::string context_id, std::string subscriber, GyExchange exchange)
      : context_id_(std::move(context_id)),
        subscriber_(std::move(subscriber)),
        exchange_(std::move(exchange)) {}

  enum class Admission : uint8_t { ADMITTED, DROPPED };

  bool gated(const std::string& bucket) const {
    auto it = buckets_.find(bucket);
    return it != buckets_.end() && it->second.gated;
  }

  const std::set<std::string>& gated_buckets() const { return gated_buckets_; }

  /// Admit a packet or event needing `need` units of credit. No partial
  /// admission: either the whole need is covered or the unit is dropped.
  /// Before accepting a denial, idle grants held for other buckets are
  /// handed back so an unconsumed reservation cannot starve live traffic.
  Admission consume(const std::string& bucket, ChargeUnit unit, uint64_t need, int64_t ts,
                    const std::optional<std::pair<std::string, std::string>>& event = std::nullopt) {
    BucketCredit& credit = buckets_[bucket];
    if (credit.gated) return Admission::DROPPED;
    if (need == 0) return Admission::ADMITTED;
    while (credit.remaining < need) {
      GyAnswer ans = request_more(bucket, unit, ts, credit, event);
      if (ans.granted_qty == 0) {
        if (release_idle_grants(bucket, ts)) continue;
        credit.gated = true;
        gated_buckets_.insert(bucket);
        return Admission::DROPPED;
      }
      credit.remaining += ans.granted_qty;
    }
    credit.remaining -= need;
    credit.unreported += need;
    return Admission::ADMITTED;
  }

  /// Report all unreported usage and settle every outstanding grant.
  GyAnswer terminate(int64_t ts) {
    ensure_initial(ts);
    for (auto& [bucket, credit] : buckets_) {
      if (credit.unreported == 0) continue;
      GyRequest rep;
      rep.type = GyRequest::Type::UPDATE;
      rep.session = context_id_;
      rep.subscriber = subscriber_;
      rep.bucket = bucket;
      rep.ts = ts;
      rep.used = {{credit.unit, credit.unreported}};
      exchange_(rep);
      credit.unreported = 0;
    }
    GyRequest term;
    term.type = GyRequest::Type::TERMINATE;
    term.session = context_id_;
    term.subscriber = subscriber_;
    term.ts = ts;
    return exchange_(term);
  }

  /// Account replenishment lifts the gates; the next chargeable unit
  /// triggers a fresh coupon request.
  void clear_gates() {
    for (auto& [bucket, credit] : buckets_) {
      (void)bucket;
      credit.gated = false;
    }
    gated_buckets_.clear();
  }

  const std::string& context_id() const { return context_id_; }
  const std::string& subscriber() const { return subscriber_; }

 private:
  struct BucketCredit {
    uint64_t remaining = 0;
    uint64_t unreported = 0;
    ChargeUnit unit = ChargeUnit::NONE;
    bool gated = false;
  };

  void ensure_initial(int64_t ts) {
    if (initial_sent_) return;
    GyRequest init;
    init.type = GyRequest::Type::INITIAL;
    init.session = context_id_;
    init.subscriber = subscriber_;
    init.ts = ts;
    exchange_(init);
    initial_sent_ = true;
  }

  /// Hand back every other bucket's unconsumed grant. Returns true when
  /// anything was reclaimed (so a denied request is worth retrying).
  bool release_idle_grants(const std::string& except_bucket, int64_t ts) {
    bool reclaimed = false;
    for (auto& [bucket, credit] : buckets_) {
      if (bucket == except_bucket || credit.remaining == 0) continue;
      GyRequest req;
      req.type = GyRequest::Type::UPDATE;
      req.session = context_id_;
      req.subscriber = subscriber_;
      req.bucket = bucket;
      req.ts = ts;
      if (credit.unreported > 0) {
        req.used = {{credit.unit, credit.unreported}};
        credit.unreported = 0;
      }
      req.release = true;
      exchange_(req);
      credit.remaining = 0;
      reclaimed = true;
    }
    return reclaimed;
  }

  GyAnswer request_more(const std::string& bucket, ChargeUnit unit, int64_t ts, BucketCredit& credit,
                        const std::optional<std::pair<std::string, std::string>>& event) {
    credit.unit = unit;
    GyRequest req;
    req.type = initial_sent_ ? GyRequest::Type::UPDATE : GyRequest::Type::INITIAL;
    initial_sent_ = true;
    req.session = context_id_;
    req.subscriber = subscriber_;
    req.bucket = bucket;
    req.ts = ts;
    if (credit.unreported > 0) {
      req.used = {{unit, credit.unreported}};
      credit.unreported = 0;
    }
    req.requested = unit;
    req.event = event;
    return exchange_(req);
  }

  std::string context_id_;
  std::string subscriber_;
  GyExchange exchange_;
  std::map<std::string, BucketCredit> buckets_;
  std::set<std::string> gated_buckets_;
  bool initial_sent_ = false;
};

}  // namespace cbb
