#include <doctest.h>

#include <random>
#include <sstream>

#include "cbb/traffic.hpp"
#include "support/helpers.hpp"
#include "support/random_world.hpp"

using namespace cbb;

namespace {

IngestResult ingest(const std::string& text) {
  std::istringstream in(text);
  return ingest_trace(in);
}

const char* kSmallTrace =
    R"({"kind":"ACTIVATE","ctx":"A","ts":0,"subscriber":"s1","apn":"apn1","qos":"gold","mode":"POSTPAID"}
{"kind":"PACKET","ctx":"A","ts":1000,"src":"10.0.0.1","dst":"93.184.216.34","sport":40001,"dport":80,"proto":"TCP","dir":"UL","bytes":1000,"url":"news.example.com/top"}
{"kind":"DEACTIVATE","ctx":"A","ts":2000}
)";

}  // namespace

TEST_CASE("ingest: empty stream yields empty sequence") {
  auto result = ingest("");
  CHECK(result.events.empty());
  CHECK(result.warnings.empty());
}

TEST_CASE("ingest: three-event session parses with correct byte total") {
  auto result = ingest(kSmallTrace);
  REQUIRE(result.events.size() == 3);
  CHECK(result.events[0].kind == SessionEvent::Kind::ACTIVATE);
  CHECK(result.events[1].kind == SessionEvent::Kind::PACKET);
  CHECK(result.events[2].kind == SessionEvent::Kind::DEACTIVATE);
  uint64_t total = 0;
  for (const auto& ev : result.events)
    if (ev.kind == SessionEvent::Kind::PACKET && ev.ctx == "A") total += ev.packet.bytes;
  CHECK(total == 1000);
  CHECK(result.events[1].packet.url == "news.example.com/top");
}

TEST_CASE("ingest: packet before ACTIVATE is an orphan") {
  const std::string text =
      R"({"kind":"PACKET","ctx":"A","ts":1,"src":"10.0.0.1","dst":"10.0.0.2","sport":1,"dport":2,"proto":"UDP","dir":"UL","bytes":5})"
      "\n";
  CHECK_THROWS_WITH_AS(ingest(text), doctest::Contains("ORPHAN_EVENT"), Error);
}

TEST_CASE("ingest: malformed line reports the line number") {
  try {
    ingest("{\"kind\":\"ACTIVATE\"\n");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MALFORMED_LINE);
    CHECK(e.where() == "line 1");
  }
}

TEST_CASE("ingest: timestamp regression within a context is rejected") {
  const std::string text =
      R"({"kind":"ACTIVATE","ctx":"A","ts":100,"subscriber":"s","apn":"a","qos":"g","mode":"POSTPAID"})"
      "\n"
      R"({"kind":"DEACTIVATE","ctx":"A","ts":50})"
      "\n";
  CHECK_THROWS_AS(ingest(text), Error);
  try {
    ingest(text);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TIME_REGRESSION);
  }
}

TEST_CASE("ingest: unknown fields are ignored with a warning") {
  const std::string text =
      R"({"kind":"DEACTIVATE","ctx":"A","ts":5,"mystery":1})"
      "\n";
  // ORPHAN guard first: activate it
  const std::string full =
      R"({"kind":"ACTIVATE","ctx":"A","ts":0,"subscriber":"s","apn":"a","qos":"g","mode":"PREPAID"})"
      "\n" +
      text;
  auto result = ingest(full);
  REQUIRE(result.events.size() == 2);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("mystery") != std::string::npos);
}

TEST_CASE("ingest: url on a non-TCP packet warns but is kept") {
  const std::string text =
      R"({"kind":"ACTIVATE","ctx":"A","ts":0,"subscriber":"s","apn":"a","qos":"g","mode":"POSTPAID"})"
      "\n"
      R"({"kind":"PACKET","ctx":"A","ts":1,"src":"10.0.0.1","dst":"10.0.0.2","sport":1,"dport":2,"proto":"UDP","dir":"DL","bytes":5,"url":"x.example/a"})"
      "\n";
  auto result = ingest(text);
  REQUIRE(result.events.size() == 2);
  CHECK(result.events[1].packet.url == "x.example/a");
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("non-TCP") != std::string::npos);
}

TEST_CASE("round trip: serialize then re-ingest yields an identical sequence") {
  std::mt19937 rng(7);
  cbbtest::TraceOptions opt;
  opt.contexts = 3;
  auto events = cbbtest::random_trace(rng, opt);
  const std::string text = serialize_trace(events);
  auto again = ingest(text);
  REQUIRE(again.events.size() == events.size());
  CHECK(again.events == events);
  // and a second round trip is byte-identical
  CHECK(serialize_trace(again.events) == text);
}

TEST_CASE("ingest: per-context byte totals equal an independent fold") {
  std::mt19937 rng(11);
  cbbtest::TraceOptions opt;
  opt.contexts = 4;
  auto events = cbbtest::random_trace(rng, opt);
  const std::string text = serialize_trace(events);

  // independent fold over the raw lines
  std::map<std::string, uint64_t> expected;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    auto o = Json::parse(line);
    if (o.at("kind") == "PACKET")
      expected[o.at("ctx").get<std::string>()] += o.at("bytes").get<uint64_t>();
  }

  std::map<std::string, uint64_t> actual;
  for (const auto& ev : ingest(text).events)
    if (ev.kind == SessionEvent::Kind::PACKET) actual[ev.ctx] += ev.packet.bytes;
  CHECK(actual == expected);
}

TEST_CASE("validate: well-formed session has an empty report") {
  auto events = ingest(kSmallTrace).events;
  CHECK(validate_session(events).ok());
}

TEST_CASE("validate: packet after deactivation is one violation") {
  std::vector<SessionEvent> events;
  events.push_back(cbbtest::activate("A", 0, "s1"));
  events.push_back(cbbtest::deactivate("A", 10));
  events.push_back(cbbtest::packet_event("A", cbbtest::make_packet(20, 100)));
  auto report = validate_session(events);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].event_index == 2);
  CHECK(report.violations[0].message == "event after deactivation");
}

TEST_CASE("validate: two ACTIVATEs for one context is one violation") {
  std::vector<SessionEvent> events;
  events.push_back(cbbtest::activate("A", 0, "s1"));
  events.push_back(cbbtest::activate("A", 5, "s1"));
  events.push_back(cbbtest::deactivate("A", 10));
  // oracle: count ACTIVATE per context
  int activates = 0;
  for (const auto& ev : events)
    if (ev.kind == SessionEvent::Kind::ACTIVATE && ev.ctx == "A") ++activates;
  REQUIRE(activates == 2);
  auto report = validate_session(events);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].message == "second ACTIVATE for context");
}

TEST_CASE("validate: QOS_CHANGE must carry a different label") {
  std::vector<SessionEvent> events;
  events.push_back(cbbtest::activate("A", 0, "s1"));
  events.push_back(cbbtest::qos_change("A", 5, "gold"));  // activate already set gold
  events.push_back(cbbtest::deactivate("A", 10));
  auto report = validate_session(events);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].message == "QOS_CHANGE carries the current profile label");
}

TEST_CASE("validate: missing DEACTIVATE is flagged") {
  std::vector<SessionEvent> events;
  events.push_back(cbbtest::activate("A", 0, "s1"));
  auto report = validate_session(events);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].message == "context never deactivated");
}

TEST_CASE("validate: pure function, same input same report") {
  std::vector<SessionEvent> events;
  events.push_back(cbbtest::activate("A", 0, "s1"));
  events.push_back(cbbtest::deactivate("A", 10));
  events.push_back(cbbtest::packet_event("A", cbbtest::make_packet(20, 100)));
  auto copy = events;
  auto first = validate_session(events);
  auto second = validate_session(events);
  CHECK(events == copy);
  REQUIRE(first.violations.size() == second.violations.size());
  for (size_t i = 0; i < first.violations.size(); ++i) {
    CHECK(first.violations[i].event_index == second.violations[i].event_index);
    CHECK(first.violations[i].message == second.violations[i].message);
  }
}
