#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cbb/error.hpp"
#include "cbb/net.hpp"
#include "cbb/rating.hpp"
#include "cbb/traffic.hpp"

namespace cbb {

// producer-marked completion tags
inline constexpr std::string_view kDownloadCompleteTag = "download-complete";
inline constexpr std::string_view kGameSessionTag = "game-session";

inline constexpr std::string_view kDefaultRuleId = "DEFAULT";

/// Layered match fields; an absent field is a wildcard, at least one must be
/// present. url_glob and app_tag are the beyond-5-tuple fields and match
/// case-sensitively.
struct MatchSpec {
  std::optional<Cidr> src_cidr;
  std::optional<Cidr> dst_cidr;
  std::optional<PortRange> sport;
  std::optional<PortRange> dport;
  std::optional<Protocol> proto;
  std::optional<std::string> url_glob;
  std::optional<std::string> app_tag;

  bool empty() const {
    return !src_cidr && !dst_cidr && !sport && !dport && !proto && !url_glob && !app_tag;
  }

  bool matches(const PacketEvent& p) const {
    if (src_cidr && !src_cidr->contains(p.src)) return false;
    if (dst_cidr && !dst_cidr->contains(p.dst)) return false;
    if (sport && !sport->contains(p.sport)) return false;
    if (dport && !dport->contains(p.dport)) return false;
    if (proto && !(*proto == p.proto)) return false;
    if (url_glob) {
      if (!p.url) return false;  // absent url never matches a url_glob rule
      if (!glob_match(*url_glob, *p.url)) return false;
    }
    if (app_tag) {
      if (!p.app_tag || *p.app_tag != *app_tag) return false;
    }
    return true;
  }
};

enum class RuleAction : uint8_t { ALLOW, DENY };

struct FilterRule {
  std::string rule_id;
  int priority = 0;  // lower value = higher precedence
  MatchSpec match;
  std::string bucket_id;
  RuleAction authorize = RuleAction::ALLOW;
};

/// Bucket configuration: which tariff prices the bucket's usage.
struct BucketConfig {
  std::string bucket_id;
  std::string tariff_id;
};

struct FlowAssignment {
  std::string context_id;
  std::string rule_id;  // kDefaultRuleId when no rule matched
  std::string bucket_id;
  bool deny = false;
  bool gated = false;  // set by online charging, PREPAID contexts only
};

/// Immutable compiled rule set; iteration order is ascending priority.
class RuleSet {
 public:
  RuleSet() = default;

  const std::vector<FilterRule>& rules() const { return rules_; }
  const std::string& default_bucket() const { return default_bucket_; }

  friend RuleSet compile_rules(std::vector<FilterRule> defs, const std::set<std::string>& buckets,
                               std::string default_bucket);

 private:
  std::vector<FilterRule> rules_;
  std::string default_bucket_;
};

inline RuleSet compile_rules(std::vector<FilterRule> defs, const std::set<std::string>& buckets,
                             std::string default_bucket) {
  if (!buckets.count(default_bucket))
    throw Error(Errc::UNKNOWN_BUCKET, "default bucket not configured", default_bucket);
  std::set<int> priorities;
  std::set<std::string> ids;
  for (const FilterRule& r : defs) {
    if (!priorities.insert(r.priority).second)
      throw Error(Errc::DUPLICATE_PRIORITY, "priority " + std::to_string(r.priority), r.rule_id);
    if (!ids.insert(r.rule_id).second)
      throw Error(Errc::DUPLICATE_PRIORITY, "duplicate rule id", r.rule_id);
    if (r.match.empty()) throw Error(Errc::EMPTY_MATCH, "rule matches nothing", r.rule_id);
    if (!buckets.count(r.bucket_id))
      throw Error(Errc::UNKNOWN_BUCKET, "bucket '" + r.bucket_id + "'", r.rule_id);
  }
  std::sort(defs.begin(), defs.end(),
            [](const FilterRule& a, const FilterRule& b) { return a.priority < b.priority; });
  RuleSet rs;
  rs.rules_ = std::move(defs);
  rs.default_bucket_ = std::move(default_bucket);
  return rs;
}

/// First match in ascending priority order; DEFAULT bucket when nothing
/// matches. Deterministic, never an error.
inline FlowAssignment classify(const std::string& context_id, const PacketEvent& packet,
                               const RuleSet& rules) {
  for (const FilterRule& r : rules.rules()) {
    if (r.match.matches(packet))
      return {context_id, r.rule_id, r.bucket_id, r.authorize == RuleAction::DENY, false};
  }
  return {context_id, std::string(kDefaultRuleId), rules.default_bucket(), false, false};
}

/// What one admitted packet or content event contributes to a bucket.
struct UsageDelta {
  uint64_t bytes_ul = 0;
  uint64_t bytes_dl = 0;
  uint64_t packets = 0;
  uint64_t clicks = 0;
  uint64_t downloads = 0;
  uint64_t games = 0;
  uint64_t events = 0;
  uint64_t secs = 0;
  int64_t quoted_amount = 0;  // minor units, PER_EVENT_QUOTED only

  uint64_t bytes() const { return bytes_ul + bytes_dl; }

  UsageDelta& operator+=(const UsageDelta& d) {
    bytes_ul += d.bytes_ul;
    bytes_dl += d.bytes_dl;
    packets += d.packets;
    clicks += d.clicks;
    downloads += d.downloads;
    games += d.games;
    events += d.events;
    secs += d.secs;
    quoted_amount += d.quoted_amount;
    return *this;
  }

  friend bool operator==(const UsageDelta&, const UsageDelta&) = default;
};

/// Session-scope accumulators per (context, bucket). Click boundaries are
/// URL transitions; streaming seconds accumulate as deltas of the rounded-up
/// cumulative duration, so container slices always sum to the session total.
class BucketStore {
 public:
  struct Entry {
    UsageDelta totals;
    std::optional<std::string> last_url;
    int64_t first_ts = 0;
    bool has_first = false;
    std::vector<QuotedEvent> event_list;
  };

  /// Contribution the packet would make, without mutating state.
  UsageDelta plan_packet(const std::string& ctx, const std::string& bucket,
                         const PacketEvent& p) const {
    UsageDelta d;
    if (p.dir == Direction::UPLINK)
      d.bytes_ul = p.bytes;
    else
      d.bytes_dl = p.bytes;
    d.packets = 1;
    const Entry* e = find(ctx, bucket);
    if (p.url && (!e || !e->last_url || *e->last_url != *p.url)) d.clicks = 1;
    if (p.app_tag && *p.app_tag == kDownloadCompleteTag) d.downloads = 1;
    if (p.app_tag && *p.app_tag == kGameSessionTag) d.games = 1;
    if (e && e->has_first) {
      uint64_t cum = ceil_secs(p.ts - e->first_ts);
      d.secs = cum - e->totals.secs;
    }
    return d;
  }

  void commit_packet(const std::string& ctx, const std::string& bucket, const PacketEvent& p,
                     const UsageDelta& d) {
    Entry& e = entries_[key(ctx, bucket)];
    if (!e.has_first) {
      e.first_ts = p.ts;
      e.has_first = true;
    }
    if (p.url) e.last_url = *p.url;
    e.totals += d;
  }

  UsageDelta plan_event(int64_t quoted_price) const {
    UsageDelta d;
    d.events = 1;
    d.quoted_amount = quoted_price;
    return d;
  }

  void commit_event(const std::string& ctx, const std::string& bucket, const std::string& event_id,
                    int64_t quoted_price) {
    Entry& e = entries_[key(ctx, bucket)];
    e.totals.events += 1;
    e.totals.quoted_amount += quoted_price;
    e.event_list.push_back({event_id, quoted_price});
  }

  const Entry* find(const std::string& ctx, const std::string& bucket) const {
    auto it = entries_.find(key(ctx, bucket));
    return it == entries_.end() ? nullptr : &it->second;
  }

  UsageDelta totals(const std::string& ctx, const std::string& bucket) const {
    const Entry* e = find(ctx, bucket);
    return e ? e->totals : UsageDelta{};
  }

  /// All buckets seen for a context, in bucket id order.
  std::vector<std::string> buckets_of(const std::string& ctx) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k.first == ctx) out.push_back(k.second);
    return out;
  }

  const std::map<std::pair<std::string, std::string>, Entry>& entries() const { return entries_; }

  static uint64_t ceil_secs(int64_t ms) {
    return ms <= 0 ? 0 : static_cast<uint64_t>((ms + 999) / 1000);
  }

 private:
  static std::pair<std::string, std::string> key(const std::string& ctx, const std::string& bucket) {
    return {ctx, bucket};
  }

  std::map<std::pair<std::string, std::string>, Entry> entries_;
};

/// Apply a packet to its assigned bucket. Gated assignments never reach this
/// point in a healthy pipeline.
inline UsageDelta accumulate(const FlowAssignment& assignment, const PacketEvent& packet,
                             BucketStore& store) {
  if (assignment.gated)
    throw Error(Errc::GATED_FLOW, "accumulate on a gated assignment", assignment.bucket_id);
  UsageDelta d = store.plan_packet(assignment.context_id, assignment.bucket_id, packet);
  store.commit_packet(assignment.context_id, assignment.bucket_id, packet, d);
  return d;
}

}  // namespace cbb
