#include <doctest.h>

#include <random>

#include "cbb/classifier.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"
#include "support/random_world.hpp"

using namespace cbb;

namespace {

RuleSet two_rule_set() {
  std::vector<FilterRule> rules(2);
  rules[0].rule_id = "news";
  rules[0].priority = 10;
  rules[0].match.url_glob = "news.example.com/*";
  rules[0].bucket_id = "news";
  rules[1].rule_id = "web";
  rules[1].priority = 20;
  rules[1].match.dport = PortRange{80, 80};
  rules[1].bucket_id = "web";
  return compile_rules(rules, {"news", "web", "misc"}, "misc");
}

}  // namespace

TEST_CASE("glob: star, question mark, case sensitivity") {
  CHECK(glob_match("*", "anything"));
  CHECK(glob_match("news.example.com/*", "news.example.com/"));
  CHECK(glob_match("news.example.com/*", "news.example.com/top/stories"));
  CHECK_FALSE(glob_match("news.example.com/*", "news.example.org/top"));
  CHECK(glob_match("file-?.mp3", "file-1.mp3"));
  CHECK_FALSE(glob_match("file-?.mp3", "file-12.mp3"));
  CHECK_FALSE(glob_match("News.example.com/*", "news.example.com/top"));
  CHECK(glob_match("a*b*c", "axxbyyc"));
  CHECK_FALSE(glob_match("a*b*c", "axxbyy"));
}

TEST_CASE("compile: zero rules leaves only DEFAULT behavior") {
  RuleSet rs = compile_rules({}, {"misc"}, "misc");
  CHECK(rs.rules().empty());
  auto a = classify("C", cbbtest::make_packet(0, 100), rs);
  CHECK(a.rule_id == kDefaultRuleId);
  CHECK(a.bucket_id == "misc");
}

TEST_CASE("compile: iteration order is ascending priority") {
  std::vector<FilterRule> rules(2);
  rules[0].rule_id = "b";
  rules[0].priority = 20;
  rules[0].match.dport = PortRange{80, 80};
  rules[0].bucket_id = "misc";
  rules[1].rule_id = "a";
  rules[1].priority = 10;
  rules[1].match.dport = PortRange{25, 25};
  rules[1].bucket_id = "misc";
  RuleSet rs = compile_rules(rules, {"misc"}, "misc");
  REQUIRE(rs.rules().size() == 2);
  CHECK(rs.rules()[0].priority == 10);
  CHECK(rs.rules()[1].priority == 20);
}

TEST_CASE("compile: duplicate priority is rejected") {
  std::vector<FilterRule> rules(2);
  rules[0].rule_id = "a";
  rules[0].priority = 10;
  rules[0].match.dport = PortRange{80, 80};
  rules[0].bucket_id = "misc";
  rules[1].rule_id = "b";
  rules[1].priority = 10;
  rules[1].match.dport = PortRange{25, 25};
  rules[1].bucket_id = "misc";
  CHECK_THROWS_AS(compile_rules(rules, {"misc"}, "misc"), Error);
  try {
    compile_rules(rules, {"misc"}, "misc");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DUPLICATE_PRIORITY);
  }
}

TEST_CASE("compile: unknown bucket and empty match are rejected") {
  std::vector<FilterRule> rules(1);
  rules[0].rule_id = "a";
  rules[0].priority = 1;
  rules[0].match.dport = PortRange{80, 80};
  rules[0].bucket_id = "nope";
  try {
    compile_rules(rules, {"misc"}, "misc");
    FAIL("expected UNKNOWN_BUCKET");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UNKNOWN_BUCKET);
  }
  rules[0].bucket_id = "misc";
  rules[0].match = MatchSpec{};
  try {
    compile_rules(rules, {"misc"}, "misc");
    FAIL("expected EMPTY_MATCH");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EMPTY_MATCH);
  }
}

TEST_CASE("classify: url glob match picks the news bucket") {
  RuleSet rs = two_rule_set();
  auto p = cbbtest::make_packet(0, 512, Direction::DOWNLINK, "news.example.com/top");
  auto got = classify("C", p, rs);
  auto want = cbbtest::brute_force_classify("C", p, rs);
  CHECK(got.bucket_id == "news");
  CHECK(got.rule_id == want.rule_id);
}

TEST_CASE("classify: no match falls back to DEFAULT") {
  RuleSet rs = two_rule_set();
  auto p = cbbtest::make_packet(0, 512, Direction::UPLINK, std::nullopt, std::nullopt, 443);
  auto a = classify("C", p, rs);
  CHECK(a.rule_id == kDefaultRuleId);
  CHECK(a.bucket_id == "misc");
  CHECK_FALSE(a.deny);
}

TEST_CASE("classify: lower priority value wins") {
  std::vector<FilterRule> rules(2);
  rules[0].rule_id = "five";
  rules[0].priority = 5;
  rules[0].match.dport = PortRange{80, 80};
  rules[0].bucket_id = "a";
  rules[1].rule_id = "nine";
  rules[1].priority = 9;
  rules[1].match.proto = Protocol::tcp();
  rules[1].bucket_id = "b";
  RuleSet rs = compile_rules(rules, {"a", "b", "misc"}, "misc");
  auto p = cbbtest::make_packet(0, 100);  // matches both
  auto got = classify("C", p, rs);
  auto want = cbbtest::brute_force_classify("C", p, rs);
  CHECK(got.rule_id == "five");
  CHECK(got.rule_id == want.rule_id);
}

TEST_CASE("classify: absent url never matches a url_glob rule, even '*'") {
  std::vector<FilterRule> rules(1);
  rules[0].rule_id = "any_url";
  rules[0].priority = 1;
  rules[0].match.url_glob = "*";
  rules[0].bucket_id = "news";
  RuleSet rs = compile_rules(rules, {"news", "misc"}, "misc");
  auto without_url = cbbtest::make_packet(0, 100);
  CHECK(classify("C", without_url, rs).rule_id == kDefaultRuleId);
  auto with_url = cbbtest::make_packet(0, 100, Direction::UPLINK, "x/y");
  CHECK(classify("C", with_url, rs).rule_id == "any_url");
}

TEST_CASE("classify: randomized agreement with the brute-force evaluator") {
  std::mt19937 rng(1234);
  auto cfg = cbbtest::random_config(rng);
  for (int i = 0; i < 2000; ++i) {
    auto p = cbbtest::random_packet(rng, 1000 + i);
    auto got = classify("C", p, cfg.rules);
    auto want = cbbtest::brute_force_classify("C", p, cfg.rules);
    REQUIRE(got.rule_id == want.rule_id);
    REQUIRE(got.bucket_id == want.bucket_id);
    REQUIRE(got.deny == want.deny);
  }
}

TEST_CASE("classify: monotone under rule removal and worse-priority addition") {
  std::mt19937 rng(99);
  auto cfg = cbbtest::random_config(rng);
  const auto& rules = cfg.rules.rules();
  std::set<std::string> buckets;
  for (const auto& [id, b] : cfg.buckets) {
    (void)b;
    buckets.insert(id);
  }
  for (int i = 0; i < 300; ++i) {
    auto p = cbbtest::random_packet(rng, i);
    auto base = classify("C", p, cfg.rules);

    // removing one non-matching rule never changes the assignment
    std::vector<FilterRule> reduced;
    bool removed = false;
    for (const auto& r : rules) {
      if (!removed && !r.match.matches(p)) {
        removed = true;
        continue;
      }
      reduced.push_back(r);
    }
    if (removed) {
      auto rs = compile_rules(reduced, buckets, cfg.default_bucket);
      auto again = classify("C", p, rs);
      REQUIRE(again.rule_id == base.rule_id);
    }

    // adding a matching rule with a priority worse than the current match
    // never changes the assignment
    if (base.rule_id != kDefaultRuleId) {
      std::vector<FilterRule> extended(rules.begin(), rules.end());
      FilterRule worse;
      worse.rule_id = "worse";
      worse.priority = 10'000;
      worse.match.proto = p.proto;
      worse.bucket_id = cfg.default_bucket;
      extended.push_back(worse);
      auto rs2 = compile_rules(extended, buckets, cfg.default_bucket);
      auto again2 = classify("C", p, rs2);
      REQUIRE(again2.rule_id == base.rule_id);
    }
  }
}

TEST_CASE("accumulate: single uplink packet") {
  BucketStore store;
  FlowAssignment a{"C", "r", "b", false, false};
  accumulate(a, cbbtest::make_packet(0, 512), store);
  auto t = store.totals("C", "b");
  CHECK(t.bytes_ul == 512);
  CHECK(t.bytes_dl == 0);
  CHECK(t.packets == 1);
}

TEST_CASE("accumulate: two packets sum, other buckets untouched") {
  BucketStore store;
  FlowAssignment a{"C", "r", "b", false, false};
  accumulate(a, cbbtest::make_packet(0, 512), store);
  accumulate(a, cbbtest::make_packet(1000, 488), store);
  CHECK(store.totals("C", "b").bytes_ul == 1000);
  CHECK(store.totals("C", "other").bytes_ul == 0);
  CHECK(store.totals("D", "b").bytes_ul == 0);
}

TEST_CASE("accumulate: gated assignment is a contract breach") {
  BucketStore store;
  FlowAssignment a{"C", "r", "b", false, true};
  CHECK_THROWS_AS(accumulate(a, cbbtest::make_packet(0, 1), store), Error);
  try {
    accumulate(a, cbbtest::make_packet(0, 1), store);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::GATED_FLOW);
  }
}

TEST_CASE("accumulate: clicks are URL transitions per (context, bucket)") {
  BucketStore store;
  FlowAssignment a{"C", "r", "b", false, false};
  accumulate(a, cbbtest::make_packet(0, 10, Direction::DOWNLINK, "x/top"), store);      // click
  accumulate(a, cbbtest::make_packet(1, 10, Direction::DOWNLINK, "x/top"), store);      // same url
  accumulate(a, cbbtest::make_packet(2, 10, Direction::DOWNLINK), store);               // no url
  accumulate(a, cbbtest::make_packet(3, 10, Direction::DOWNLINK, "x/sports"), store);   // click
  accumulate(a, cbbtest::make_packet(4, 10, Direction::DOWNLINK, "x/top"), store);      // click again
  CHECK(store.totals("C", "b").clicks == 3);
  // a different bucket has independent click state
  FlowAssignment b{"C", "r", "b2", false, false};
  accumulate(b, cbbtest::make_packet(5, 10, Direction::DOWNLINK, "x/top"), store);
  CHECK(store.totals("C", "b2").clicks == 1);
}

TEST_CASE("accumulate: download and game completion tags") {
  BucketStore store;
  FlowAssignment a{"C", "r", "b", false, false};
  accumulate(a, cbbtest::make_packet(0, 10, Direction::DOWNLINK, std::nullopt,
                                     std::string(kDownloadCompleteTag)),
             store);
  accumulate(a, cbbtest::make_packet(1, 10, Direction::DOWNLINK, std::nullopt,
                                     std::string(kGameSessionTag)),
             store);
  auto t = store.totals("C", "b");
  CHECK(t.downloads == 1);
  CHECK(t.games == 1);
}

TEST_CASE("accumulate: seconds are rounded-up cumulative deltas") {
  BucketStore store;
  FlowAssignment a{"C", "r", "b", false, false};
  accumulate(a, cbbtest::make_packet(10'000, 1), store);  // first packet: 0 secs
  CHECK(store.totals("C", "b").secs == 0);
  accumulate(a, cbbtest::make_packet(10'400, 1), store);  // 400ms -> ceil 1
  CHECK(store.totals("C", "b").secs == 1);
  accumulate(a, cbbtest::make_packet(11'000, 1), store);  // 1000ms -> still 1
  CHECK(store.totals("C", "b").secs == 1);
  accumulate(a, cbbtest::make_packet(13'500, 1), store);  // 3500ms -> ceil 4
  CHECK(store.totals("C", "b").secs == 4);
}

TEST_CASE("partition: every packet lands in exactly one bucket, bytes conserved") {
  std::mt19937 rng(4321);
  auto cfg = cbbtest::random_config(rng);
  BucketStore store;
  uint64_t offered = 0, denied = 0;
  for (int i = 0; i < 500; ++i) {
    auto p = cbbtest::random_packet(rng, i * 100);
    auto a = classify("C", p, cfg.rules);
    offered += p.bytes;
    if (a.deny) {
      denied += p.bytes;
      continue;
    }
    accumulate(a, p, store);
  }
  uint64_t in_buckets = 0;
  for (const auto& [key, entry] : store.entries()) {
    (void)key;
    in_buckets += entry.totals.bytes();
  }
  CHECK(in_buckets + denied == offered);
}
