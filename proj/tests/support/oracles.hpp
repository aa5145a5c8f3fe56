#pragma once

// Independent reference evaluators used to check the engine. Written from
// the published charging rules, deliberately not sharing code with the
// implementation paths they verify.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cbb/classifier.hpp"
#include "cbb/config.hpp"
#include "cbb/traffic.hpp"

namespace cbbtest {

/// Brute force: evaluate every rule, keep all matches, pick the minimum
/// priority. No early exit, no ordering assumptions.
inline cbb::FlowAssignment brute_force_classify(const std::string& ctx, const cbb::PacketEvent& p,
                                                const cbb::RuleSet& rules) {
  const cbb::FilterRule* best = nullptr;
  for (const cbb::FilterRule& r : rules.rules()) {
    bool match = true;
    if (r.match.src_cidr && !r.match.src_cidr->contains(p.src)) match = false;
    if (r.match.dst_cidr && !r.match.dst_cidr->contains(p.dst)) match = false;
    if (r.match.sport && !(p.sport >= r.match.sport->lo && p.sport <= r.match.sport->hi)) match = false;
    if (r.match.dport && !(p.dport >= r.match.dport->lo && p.dport <= r.match.dport->hi)) match = false;
    if (r.match.proto && !(*r.match.proto == p.proto)) match = false;
    if (r.match.url_glob) {
      if (!p.url || !cbb::glob_match(*r.match.url_glob, *p.url)) match = false;
    }
    if (r.match.app_tag && (!p.app_tag || *p.app_tag != *r.match.app_tag)) match = false;
    if (match && (!best || r.priority < best->priority)) best = &r;
  }
  if (!best) return {ctx, std::string(cbb::kDefaultRuleId), rules.default_bucket(), false, false};
  return {ctx, best->rule_id, best->bucket_id, best->authorize == cbb::RuleAction::DENY, false};
}

/// What the event walk predicts for one closed record.
struct ContainerPrediction {
  int volume_cuts = 0;
  int qos_cuts = 0;
  int tod_cuts = 0;
  int containers = 0;  // 1 + all cuts
  std::map<std::string, cbb::UsageDelta> totals;  // admitted usage per bucket
};

/// Replay one postpaid context's events and predict container cuts and
/// per-bucket totals from the published trigger rules.
inline ContainerPrediction predict_containers(const std::vector<cbb::SessionEvent>& events,
                                              const std::string& ctx,
                                              const cbb::EngineConfig& config) {
  ContainerPrediction out;
  constexpr int64_t kHour = 3'600'000;
  constexpr int64_t kDay = 86'400'000;

  bool active = false;
  int64_t last_clock = 0;
  uint64_t volume = 0;
  uint64_t limit = 0;
  std::vector<int> cut_hours;
  std::map<std::string, std::string> last_url;  // bucket -> url
  std::map<std::string, int64_t> first_ts;      // bucket -> first packet ts
  std::map<std::string, uint64_t> secs_so_far;  // bucket -> ceil seconds charged

  auto clock_to = [&](int64_t now) {
    if (now <= last_clock) return;
    std::set<int64_t> bounds;
    for (int h : cut_hours) {
      int64_t c = (last_clock / kDay) * kDay + h * kHour;
      while (c <= last_clock) c += kDay;
      while (c <= now) {
        bounds.insert(c);
        c += kDay;
      }
    }
    out.tod_cuts += static_cast<int>(bounds.size());
    last_clock = now;
  };

  for (const cbb::SessionEvent& ev : events) {
    if (ev.ctx != ctx) continue;
    switch (ev.kind) {
      case cbb::SessionEvent::Kind::ACTIVATE: {
        active = true;
        last_clock = ev.ts;
        const cbb::ApnProfile& apn = config.apn_profiles.at(ev.apn);
        limit = apn.volume_limit_bytes;
        if (apn.tod_profile_id) {
          const cbb::TodProfile& tod = config.tod_profiles.at(*apn.tod_profile_id);
          cut_hours.assign(tod.cut_hours.begin(), tod.cut_hours.end());
        }
        break;
      }
      case cbb::SessionEvent::Kind::QOS_CHANGE:
        clock_to(ev.ts);
        ++out.qos_cuts;
        break;
      case cbb::SessionEvent::Kind::PACKET: {
        if (!active) break;
        clock_to(ev.ts);
        cbb::FlowAssignment a = brute_force_classify(ctx, ev.packet, config.rules);
        if (a.deny) break;
        cbb::UsageDelta& t = out.totals[a.bucket_id];
        if (ev.packet.dir == cbb::Direction::UPLINK)
          t.bytes_ul += ev.packet.bytes;
        else
          t.bytes_dl += ev.packet.bytes;
        t.packets += 1;
        if (ev.packet.url) {
          auto it = last_url.find(a.bucket_id);
          if (it == last_url.end() || it->second != *ev.packet.url) t.clicks += 1;
          last_url[a.bucket_id] = *ev.packet.url;
        }
        if (ev.packet.app_tag == cbb::kDownloadCompleteTag) t.downloads += 1;
        if (ev.packet.app_tag == cbb::kGameSessionTag) t.games += 1;
        if (!first_ts.count(a.bucket_id)) {
          first_ts[a.bucket_id] = ev.ts;
        } else {
          const int64_t ms = ev.ts - first_ts[a.bucket_id];
          const uint64_t cum = ms <= 0 ? 0 : static_cast<uint64_t>((ms + 999) / 1000);
          t.secs += cum - secs_so_far[a.bucket_id];
          secs_so_far[a.bucket_id] = cum;
        }
        volume += ev.packet.bytes;
        if (limit > 0) {
          while (volume >= limit) {
            volume -= limit;
            ++out.volume_cuts;
          }
        }
        break;
      }
      case cbb::SessionEvent::Kind::EVENT: {
        clock_to(ev.ts);
        out.totals[ev.bucket].events += 1;
        break;
      }
      case cbb::SessionEvent::Kind::DEACTIVATE:
        clock_to(ev.ts);
        active = false;
        break;
      default:
        break;
    }
  }
  out.containers = 1 + out.volume_cuts + out.qos_cuts + out.tod_cuts;
  return out;
}

}  // namespace cbbtest
