#pragma once

#include <optional>
#include <string>

#include "cbb/classifier.hpp"
#include "cbb/config.hpp"
#include "cbb/traffic.hpp"

namespace cbbtest {

inline cbb::PacketEvent make_packet(int64_t ts, uint64_t bytes,
                                    cbb::Direction dir = cbb::Direction::UPLINK,
                                    std::optional<std::string> url = std::nullopt,
                                    std::optional<std::string> app_tag = std::nullopt,
                                    uint16_t dport = 80) {
  cbb::PacketEvent p;
  p.ts = ts;
  p.src = *cbb::parse_ipv4("10.0.0.1");
  p.dst = *cbb::parse_ipv4("198.51.100.1");
  p.sport = 40000;
  p.dport = dport;
  p.proto = cbb::Protocol::tcp();
  p.dir = dir;
  p.bytes = bytes;
  p.url = std::move(url);
  p.app_tag = std::move(app_tag);
  return p;
}

inline cbb::SessionEvent activate(const std::string& ctx, int64_t ts, const std::string& subscriber,
                                  cbb::PaymentMode mode = cbb::PaymentMode::POSTPAID,
                                  const std::string& apn = "apn1", const std::string& qos = "gold") {
  cbb::SessionEvent ev;
  ev.kind = cbb::SessionEvent::Kind::ACTIVATE;
  ev.ctx = ctx;
  ev.ts = ts;
  ev.subscriber = subscriber;
  ev.apn = apn;
  ev.qos = qos;
  ev.mode = mode;
  return ev;
}

inline cbb::SessionEvent packet_event(const std::string& ctx, const cbb::PacketEvent& p) {
  cbb::SessionEvent ev;
  ev.kind = cbb::SessionEvent::Kind::PACKET;
  ev.ctx = ctx;
  ev.ts = p.ts;
  ev.packet = p;
  return ev;
}

inline cbb::SessionEvent qos_change(const std::string& ctx, int64_t ts, const std::string& qos) {
  cbb::SessionEvent ev;
  ev.kind = cbb::SessionEvent::Kind::QOS_CHANGE;
  ev.ctx = ctx;
  ev.ts = ts;
  ev.qos = qos;
  return ev;
}

inline cbb::SessionEvent deactivate(const std::string& ctx, int64_t ts) {
  cbb::SessionEvent ev;
  ev.kind = cbb::SessionEvent::Kind::DEACTIVATE;
  ev.ctx = ctx;
  ev.ts = ts;
  return ev;
}

inline cbb::SessionEvent content_event(const std::string& ctx, int64_t ts, const std::string& id,
                                       const std::string& event_class, const std::string& bucket) {
  cbb::SessionEvent ev;
  ev.kind = cbb::SessionEvent::Kind::EVENT;
  ev.ctx = ctx;
  ev.ts = ts;
  ev.event_id = id;
  ev.event_class = event_class;
  ev.bucket = bucket;
  return ev;
}

inline cbb::SessionEvent topup(const std::string& subscriber, int64_t ts, int64_t amount) {
  cbb::SessionEvent ev;
  ev.kind = cbb::SessionEvent::Kind::TOPUP;
  ev.subscriber = subscriber;
  ev.ts = ts;
  ev.amount = amount;
  return ev;
}

inline cbb::Tariff make_tariff(const std::string& id, cbb::BillingMethod method, int64_t rate = 0,
                               const std::string& currency = "mu") {
  cbb::Tariff t;
  t.tariff_id = id;
  t.method = method;
  t.rate = rate;
  t.currency = currency;
  return t;
}

}  // namespace cbbtest
