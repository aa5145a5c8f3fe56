#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cbb/error.hpp"
#include "cbb/money.hpp"

namespace cbb {

/// The seven billing methods.
enum class BillingMethod : uint8_t {
  FREE,
  PER_BYTE,
  PER_CLICK,
  PER_DOWNLOAD,
  PER_GAME,
  PER_EVENT_QUOTED,
  PER_SECOND,
};

inline std::string_view to_string(BillingMethod m) {
  switch (m) {
    case BillingMethod::FREE: return "FREE";
    case BillingMethod::PER_BYTE: return "PER_BYTE";
    case BillingMethod::PER_CLICK: return "PER_CLICK";
    case BillingMethod::PER_DOWNLOAD: return "PER_DOWNLOAD";
    case BillingMethod::PER_GAME: return "PER_GAME";
    case BillingMethod::PER_EVENT_QUOTED: return "PER_EVENT_QUOTED";
    case BillingMethod::PER_SECOND: return "PER_SECOND";
  }
  return "?";
}

inline std::optional<BillingMethod> parse_billing_method(const std::string& s) {
  if (s == "FREE") return BillingMethod::FREE;
  if (s == "PER_BYTE") return BillingMethod::PER_BYTE;
  if (s == "PER_CLICK") return BillingMethod::PER_CLICK;
  if (s == "PER_DOWNLOAD") return BillingMethod::PER_DOWNLOAD;
  if (s == "PER_GAME") return BillingMethod::PER_GAME;
  if (s == "PER_EVENT_QUOTED") return BillingMethod::PER_EVENT_QUOTED;
  if (s == "PER_SECOND") return BillingMethod::PER_SECOND;
  return std::nullopt;
}

/// One billing method plus its rate parameters. `rate` is minor units per
/// usage unit (byte, click, download, game or second); PER_EVENT_QUOTED
/// prices come from `event_prices` instead.
struct Tariff {
  std::string tariff_id;
  BillingMethod method = BillingMethod::FREE;
  int64_t rate = 0;
  std::map<std::string, int64_t> event_prices;  // event class -> minor units
  std::string currency;
  int64_t effective_from = 0;
};

struct QuotedEvent {
  std::string event_id;
  std::optional<int64_t> price;  // minor units; absent = never quoted

  friend bool operator==(const QuotedEvent&, const QuotedEvent&) = default;
};

/// Rated view of one bucket's accumulators at a cut instant.
struct UsageSnapshot {
  std::string context_id;
  std::string bucket_id;
  std::string tariff_id;
  uint64_t bytes_total = 0;
  uint64_t click_count = 0;
  uint64_t download_count = 0;
  uint64_t game_count = 0;
  std::vector<QuotedEvent> event_list;
  uint64_t active_seconds = 0;
};

/// Pure rating function. Integer arithmetic throughout.
inline Money rate(const UsageSnapshot& snapshot, const Tariff& tariff) {
  if (!snapshot.tariff_id.empty() && snapshot.tariff_id != tariff.tariff_id)
    throw Error(Errc::METHOD_MISMATCH,
                "snapshot rated for tariff '" + snapshot.tariff_id + "', got '" + tariff.tariff_id + "'");
  Money charge{0, tariff.currency};
  switch (tariff.method) {
    case BillingMethod::FREE:
      break;
    case BillingMethod::PER_BYTE:
      charge.amount = static_cast<int64_t>(snapshot.bytes_total) * tariff.rate;
      break;
    case BillingMethod::PER_CLICK:
      charge.amount = static_cast<int64_t>(snapshot.click_count) * tariff.rate;
      break;
    case BillingMethod::PER_DOWNLOAD:
      charge.amount = static_cast<int64_t>(snapshot.download_count) * tariff.rate;
      break;
    case BillingMethod::PER_GAME:
      charge.amount = static_cast<int64_t>(snapshot.game_count) * tariff.rate;
      break;
    case BillingMethod::PER_EVENT_QUOTED:
      for (const auto& ev : snapshot.event_list) {
        if (!ev.price) throw Error(Errc::QUOTE_MISSING, "event without a quote", ev.event_id);
        charge.amount += *ev.price;
      }
      break;
    case BillingMethod::PER_SECOND:
      charge.amount = static_cast<int64_t>(snapshot.active_seconds) * tariff.rate;
      break;
  }
  return charge;
}

struct Quote {
  std::string quote_id;
  std::string event_id;
  Money price;
  int64_t expiry = 0;
};

/// Per-run quote registry. Issuing twice for one event id returns the
/// original quote.
class QuoteBook {
 public:
  explicit QuoteBook(int64_t ttl_ms = 300'000) : ttl_ms_(ttl_ms) {}

  const Quote& request_quote(const std::string& bucket_id, const std::string& event_id,
                             const std::string& event_class, const Tariff& tariff, int64_t now) {
    (void)bucket_id;
    if (tariff.method != BillingMethod::PER_EVENT_QUOTED)
      throw Error(Errc::METHOD_MISMATCH, "quotes require a PER_EVENT_QUOTED tariff", tariff.tariff_id);
    auto it = quotes_.find(event_id);
    if (it != quotes_.end()) return it->second;
    auto price = tariff.event_prices.find(event_class);
    if (price == tariff.event_prices.end())
      throw Error(Errc::UNKNOWN_EVENT_CLASS, "no configured price for class '" + event_class + "'", event_id);
    Quote q{"q:" + event_id, event_id, Money{price->second, tariff.currency}, now + ttl_ms_};
    return quotes_.emplace(event_id, std::move(q)).first->second;
  }

  /// Quote usable to charge an event at `now`, or QUOTE_MISSING.
  const Quote& charged_quote(const std::string& event_id, int64_t now) const {
    auto it = quotes_.find(event_id);
    if (it == quotes_.end()) throw Error(Errc::QUOTE_MISSING, "event never quoted", event_id);
    if (now > it->second.expiry) throw Error(Errc::QUOTE_MISSING, "quote expired", event_id);
    return it->second;
  }

  int64_t ttl_ms() const { return ttl_ms_; }

 private:
  int64_t ttl_ms_;
  std::map<std::string, Quote> quotes_;
};

/// Versioned tariff store. Swaps publish a new version effective at a given
/// instant; usage already rated is never recomputed, and a swap effective at
/// or before the latest rated cut is rejected.
class TariffCatalog {
 public:
  void add(Tariff tariff) {
    auto& versions = versions_[tariff.tariff_id];
    versions.push_back(std::move(tariff));
    std::stable_sort(versions.begin(), versions.end(),
                     [](const Tariff& a, const Tariff& b) { return a.effective_from < b.effective_from; });
  }

  void swap_tariff(const std::string& tariff_id, Tariff replacement, int64_t effective_from) {
    auto rated = last_rated_.find(tariff_id);
    if (rated != last_rated_.end() && effective_from <= rated->second)
      throw Error(Errc::RETROACTIVE_CHANGE,
                  "effective_from " + std::to_string(effective_from) + " not after last rated cut " +
                      std::to_string(rated->second),
                  tariff_id);
    replacement.tariff_id = tariff_id;
    replacement.effective_from = effective_from;
    add(std::move(replacement));
  }

  bool has(const std::string& tariff_id) const { return versions_.count(tariff_id) != 0; }

  /// Version in force at `at`.
  const Tariff& effective(const std::string& tariff_id, int64_t at) const {
    auto it = versions_.find(tariff_id);
    if (it == versions_.end() || it->second.empty())
      throw Error(Errc::METHOD_MISMATCH, "unknown tariff", tariff_id);
    const Tariff* best = nullptr;
    for (const Tariff& t : it->second) {
      if (t.effective_from <= at) best = &t;
    }
    if (!best) best = &it->second.front();
    return *best;
  }

  /// Rate a snapshot under the version in force at `at` and advance the
  /// rated high-water mark used by the retroactivity guard.
  Money rate_at(const UsageSnapshot& snapshot, const std::string& tariff_id, int64_t at) {
    Money m = rate(snapshot, effective(tariff_id, at));
    note_rated(tariff_id, at);
    return m;
  }

  /// Advance the rated high-water mark (e.g. to a container's end time).
  void note_rated(const std::string& tariff_id, int64_t at) {
    int64_t& mark = last_rated_[tariff_id];
    mark = std::max(mark, at);
  }

  const std::map<std::string, std::vector<Tariff>>& all() const { return versions_; }

 private:
  std::map<std::string, std::vector<Tariff>> versions_;
  std::map<std::string, int64_t> last_rated_;
};

}  // namespace cbb
