#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbb/cdr.hpp"
#include "cbb/classifier.hpp"
#include "cbb/crypto.hpp"
#include "cbb/error.hpp"
#include "cbb/online.hpp"
#include "cbb/rating.hpp"
#include "cbb/securepay.hpp"

namespace cbb {

struct SecureSubscriberConfig {
  Bytes key_seed;
};

struct VaspConfig {
  Bytes key_seed;
  int64_t fee_bp = 0;
};

/// Secured-charging parameters; only the token tool needs these.
struct SecureConfig {
  std::string hash_alg = "sha-256";
  int64_t fee_bp = 0;
  std::string token_currency;
  ValidityWindow credential_window{0, 0};
  Bytes issuer_seed;
  std::map<std::string, SecureSubscriberConfig> subscribers;
  std::map<std::string, VaspConfig> vasps;
};

/// Everything the engine is configured with; cross-references are resolved
/// and validated before any event is processed.
struct EngineConfig {
  std::string currency;
  std::string default_bucket;
  std::map<std::string, BucketConfig> buckets;
  RuleSet rules;
  TariffCatalog tariffs;
  std::map<std::string, ApnProfile> apn_profiles;
  std::map<std::string, TodProfile> tod_profiles;
  QuantumConfig quanta;
  std::map<std::string, int64_t> prepaid_accounts;  // subscriber -> opening balance
  int64_t quote_ttl_ms = 300'000;
  std::optional<SecureConfig> secure;

  const BucketConfig& bucket(const std::string& id) const {
    auto it = buckets.find(id);
    if (it == buckets.end()) throw Error(Errc::UNKNOWN_BUCKET, "bucket not configured", id);
    return it->second;
  }

  std::map<std::string, std::string> bucket_tariff_map() const {
    std::map<std::string, std::string> out;
    for (const auto& [id, b] : buckets) out[id] = b.tariff_id;
    return out;
  }
};

namespace config_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& reason) {
  throw Error(Errc::CONFIG_INVALID, reason, path);
}

inline PortRange parse_port_range(const Json& v, const std::string& path, const char* key) {
  auto in_range = [&](int64_t p) {
    if (p < 0 || p > 65535) fail(path, std::string(key) + ": port out of range");
    return static_cast<uint16_t>(p);
  };
  if (v.is_number_integer()) {
    uint16_t p = in_range(v.get<int64_t>());
    return {p, p};
  }
  if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
    PortRange r{in_range(v[0].get<int64_t>()), in_range(v[1].get<int64_t>())};
    if (r.lo > r.hi) fail(path, std::string(key) + ": empty port range");
    return r;
  }
  fail(path, std::string(key) + ": expected port or [lo, hi]");
}

inline MatchSpec parse_match(const Json& m, const std::string& path) {
  MatchSpec spec;
  if (m.contains("src_cidr")) {
    spec.src_cidr = parse_cidr(m.at("src_cidr").get<std::string>());
    if (!spec.src_cidr) fail(path, "bad src_cidr");
  }
  if (m.contains("dst_cidr")) {
    spec.dst_cidr = parse_cidr(m.at("dst_cidr").get<std::string>());
    if (!spec.dst_cidr) fail(path, "bad dst_cidr");
  }
  if (m.contains("sport")) spec.sport = parse_port_range(m.at("sport"), path, "sport");
  if (m.contains("dport")) spec.dport = parse_port_range(m.at("dport"), path, "dport");
  if (m.contains("proto")) {
    const Json& p = m.at("proto");
    if (p.is_string() && p.get<std::string>() == "TCP")
      spec.proto = Protocol::tcp();
    else if (p.is_string() && p.get<std::string>() == "UDP")
      spec.proto = Protocol::udp();
    else if (p.is_number_integer())
      spec.proto = Protocol::other(static_cast<uint8_t>(p.get<int64_t>()));
    else
      fail(path, "bad proto");
  }
  if (m.contains("url_glob")) spec.url_glob = m.at("url_glob").get<std::string>();
  if (m.contains("app_tag")) spec.app_tag = m.at("app_tag").get<std::string>();
  return spec;
}

inline Bytes seed_bytes(const Json& v, const std::string& path, const std::string& what) {
  if (!v.is_string()) fail(path, what + ": expected hex string");
  auto bytes = from_hex(v.get<std::string>());
  if (!bytes || bytes->empty()) fail(path, what + ": bad hex seed");
  return *bytes;
}

}  // namespace config_detail

inline EngineConfig parse_config(const Json& doc, const std::string& path) {
  using config_detail::fail;
  EngineConfig cfg;
  if (!doc.is_object()) fail(path, "config must be a JSON object");

  if (!doc.contains("currency") || !doc.at("currency").is_string() ||
      doc.at("currency").get<std::string>().empty())
    fail(path, "missing currency");
  cfg.currency = doc.at("currency").get<std::string>();

  // tariffs
  if (!doc.contains("tariffs") || !doc.at("tariffs").is_array()) fail(path, "missing tariffs array");
  for (const Json& t : doc.at("tariffs")) {
    Tariff tariff;
    tariff.tariff_id = t.at("id").get<std::string>();
    auto method = parse_billing_method(t.at("method").get<std::string>());
    if (!method) fail(path, "tariff " + tariff.tariff_id + ": unknown method");
    tariff.method = *method;
    tariff.currency = cfg.currency;
    if (t.contains("currency") && t.at("currency").get<std::string>() != cfg.currency)
      fail(path, "tariff " + tariff.tariff_id + ": currency differs from engine currency");
    if (t.contains("rate")) {
      tariff.rate = t.at("rate").get<int64_t>();
      if (tariff.rate < 0) fail(path, "tariff " + tariff.tariff_id + ": negative rate");
    }
    if (t.contains("event_prices")) {
      for (auto it = t.at("event_prices").begin(); it != t.at("event_prices").end(); ++it) {
        int64_t price = it.value().get<int64_t>();
        if (price < 0) fail(path, "tariff " + tariff.tariff_id + ": negative event price");
        tariff.event_prices[it.key()] = price;
      }
    }
    if (tariff.method == BillingMethod::PER_EVENT_QUOTED && tariff.event_prices.empty())
      fail(path, "tariff " + tariff.tariff_id + ": PER_EVENT_QUOTED needs event_prices");
    if (t.contains("effective_from")) tariff.effective_from = t.at("effective_from").get<int64_t>();
    if (cfg.tariffs.has(tariff.tariff_id) &&
        cfg.tariffs.effective(tariff.tariff_id, tariff.effective_from).effective_from ==
            tariff.effective_from)
      fail(path, "tariff " + tariff.tariff_id + ": duplicate effective_from");
    cfg.tariffs.add(std::move(tariff));
  }

  // buckets
  if (!doc.contains("buckets") || !doc.at("buckets").is_array()) fail(path, "missing buckets array");
  for (const Json& b : doc.at("buckets")) {
    BucketConfig bucket{b.at("id").get<std::string>(), b.at("tariff").get<std::string>()};
    if (!cfg.tariffs.has(bucket.tariff_id))
      fail(path, "bucket " + bucket.bucket_id + ": unknown tariff " + bucket.tariff_id);
    if (!cfg.buckets.emplace(bucket.bucket_id, bucket).second)
      fail(path, "duplicate bucket id " + bucket.bucket_id);
  }

  if (!doc.contains("default_bucket")) fail(path, "missing default_bucket");
  cfg.default_bucket = doc.at("default_bucket").get<std::string>();
  if (!cfg.buckets.count(cfg.default_bucket)) fail(path, "default_bucket is not a configured bucket");

  // rules
  std::vector<FilterRule> defs;
  if (doc.contains("rules")) {
    for (const Json& r : doc.at("rules")) {
      FilterRule rule;
      rule.rule_id = r.at("id").get<std::string>();
      rule.priority = r.at("priority").get<int>();
      rule.match = config_detail::parse_match(r.at("match"), path);
      rule.bucket_id = r.at("bucket").get<std::string>();
      if (r.contains("authorize")) {
        const std::string a = r.at("authorize").get<std::string>();
        if (a == "DENY")
          rule.authorize = RuleAction::DENY;
        else if (a != "ALLOW")
          fail(path, "rule " + rule.rule_id + ": bad authorize value");
      }
      defs.push_back(std::move(rule));
    }
  }
  std::set<std::string> bucket_ids;
  for (const auto& [id, b] : cfg.buckets) {
    (void)b;
    bucket_ids.insert(id);
  }
  try {
    cfg.rules = compile_rules(std::move(defs), bucket_ids, cfg.default_bucket);
  } catch (const Error& e) {
    fail(path, std::string("rule compilation: ") + e.what());
  }

  // apn / tod profiles
  if (doc.contains("tod_profiles")) {
    for (const Json& t : doc.at("tod_profiles")) {
      TodProfile tod;
      tod.tod_id = t.at("id").get<std::string>();
      for (const Json& h : t.at("cut_hours")) {
        int hour = h.get<int>();
        if (hour < 0 || hour > 23) fail(path, "tod " + tod.tod_id + ": cut hour out of range");
        if (!tod.cut_hours.insert(hour).second)
          fail(path, "tod " + tod.tod_id + ": duplicate cut hour");
      }
      if (!cfg.tod_profiles.emplace(tod.tod_id, tod).second)
        fail(path, "duplicate tod profile " + tod.tod_id);
    }
  }
  if (!doc.contains("apn_profiles") || !doc.at("apn_profiles").is_array())
    fail(path, "missing apn_profiles array");
  for (const Json& a : doc.at("apn_profiles")) {
    ApnProfile apn;
    apn.apn_id = a.at("id").get<std::string>();
    int64_t limit = a.at("volume_limit_bytes").get<int64_t>();
    if (limit <= 0) fail(path, "apn " + apn.apn_id + ": volume_limit_bytes must be positive");
    apn.volume_limit_bytes = static_cast<uint64_t>(limit);
    if (a.contains("tod_profile")) {
      apn.tod_profile_id = a.at("tod_profile").get<std::string>();
      if (!cfg.tod_profiles.count(*apn.tod_profile_id))
        fail(path, "apn " + apn.apn_id + ": unknown tod profile " + *apn.tod_profile_id);
    }
    if (!cfg.apn_profiles.emplace(apn.apn_id, apn).second)
      fail(path, "duplicate apn profile " + apn.apn_id);
  }

  if (doc.contains("quote_ttl_ms")) {
    cfg.quote_ttl_ms = doc.at("quote_ttl_ms").get<int64_t>();
    if (cfg.quote_ttl_ms <= 0) fail(path, "quote_ttl_ms must be positive");
  }

  // prepaid
  if (doc.contains("prepaid")) {
    const Json& p = doc.at("prepaid");
    if (p.contains("quanta")) {
      const Json& q = p.at("quanta");
      auto read = [&](const char* key, uint64_t& out) {
        if (!q.contains(key)) return;
        int64_t v = q.at(key).get<int64_t>();
        if (v <= 0) fail(path, std::string("quanta.") + key + " must be positive");
        out = static_cast<uint64_t>(v);
      };
      read("bytes", cfg.quanta.bytes);
      read("seconds", cfg.quanta.seconds);
      read("clicks", cfg.quanta.clicks);
      read("downloads", cfg.quanta.downloads);
      read("games", cfg.quanta.games);
    }
    if (p.contains("accounts")) {
      for (const Json& a : p.at("accounts")) {
        const std::string sub = a.at("subscriber").get<std::string>();
        int64_t balance = a.at("balance").get<int64_t>();
        if (balance < 0) fail(path, "account " + sub + ": negative opening balance");
        if (!cfg.prepaid_accounts.emplace(sub, balance).second)
          fail(path, "duplicate prepaid account " + sub);
      }
    }
  }

  // secure
  if (doc.contains("secure")) {
    const Json& s = doc.at("secure");
    SecureConfig sec;
    if (s.contains("hash_alg")) sec.hash_alg = s.at("hash_alg").get<std::string>();
    hash_by_name(sec.hash_alg);  // validates the name
    if (s.contains("fee_bp")) {
      sec.fee_bp = s.at("fee_bp").get<int64_t>();
      if (sec.fee_bp < 0 || sec.fee_bp > 10'000) fail(path, "secure.fee_bp out of range");
    }
    sec.token_currency = s.contains("token_currency") ? s.at("token_currency").get<std::string>()
                                                      : cfg.currency;
    if (s.contains("credential_window")) {
      sec.credential_window.from = s.at("credential_window").at("from").get<int64_t>();
      sec.credential_window.to = s.at("credential_window").at("to").get<int64_t>();
      if (sec.credential_window.from > sec.credential_window.to)
        fail(path, "secure.credential_window is empty");
    }
    if (!s.contains("issuer_seed")) fail(path, "secure section needs issuer_seed");
    sec.issuer_seed = config_detail::seed_bytes(s.at("issuer_seed"), path, "issuer_seed");
    if (s.contains("subscribers")) {
      for (auto it = s.at("subscribers").begin(); it != s.at("subscribers").end(); ++it)
        sec.subscribers[it.key()] = {
            config_detail::seed_bytes(it.value().at("seed"), path, "subscriber seed")};
    }
    if (s.contains("vasps")) {
      for (auto it = s.at("vasps").begin(); it != s.at("vasps").end(); ++it) {
        VaspConfig v;
        v.key_seed = config_detail::seed_bytes(it.value().at("seed"), path, "vasp seed");
        v.fee_bp = it.value().contains("fee_bp") ? it.value().at("fee_bp").get<int64_t>() : sec.fee_bp;
        if (v.fee_bp < 0 || v.fee_bp > 10'000) fail(path, "vasp " + it.key() + ": fee_bp out of range");
        sec.vasps[it.key()] = std::move(v);
      }
    }
    cfg.secure = std::move(sec);
  }

  return cfg;
}

inline EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::CONFIG_INVALID, "cannot open file", path);
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::CONFIG_INVALID, "not valid JSON", path);
  return parse_config(doc, path);
}

}  // namespace cbb
