#include <doctest.h>

#include "ric/gateway/config.hpp"

using namespace ric;
using namespace ric::gateway;

TEST_CASE("config: full example parses") {
  auto cfg = parse_config(
      "# gateway config\n"
      "listen = 0.0.0.0:9901\n"
      "upstream = mock:seed=7,total=2500\n"
      "interval_tokens = 250\n"
      "interruption_text = Remember the house rules.\n"
      "mode = turn_level\n"
      "targets = user,cot\n"
      "sentinel_open = [[RIC-INT id={n} off={t}]]\n"
      "sentinel_close = [[/RIC-INT]]\n"
      "audit_log = /tmp/ric-audit.ndjson\n"
      "carry_ttl_seconds = 120\n"
      "rule.0.predicate = cumulative_tokens_at_least:5000\n"
      "rule.0.text = Long-context reminder.\n"
      "rule.1.predicate = content_matches:ignore previous\n"
      "rule.1.text = The opening instructions still hold.\n");
  CHECK(cfg.listen_host == "0.0.0.0");
  CHECK(cfg.listen_port == 9901);
  CHECK(cfg.upstream == "mock:seed=7,total=2500");
  CHECK(cfg.policy.interval_tokens == 250);
  CHECK(cfg.policy.default_text == "Remember the house rules.");
  CHECK(cfg.policy.mode == InjectionMode::TurnLevel);
  CHECK(cfg.policy.targets.count(InjectionTarget::UserInput) == 1);
  CHECK(cfg.policy.targets.count(InjectionTarget::CoT) == 1);
  CHECK(cfg.audit_log_path == "/tmp/ric-audit.ndjson");
  CHECK(cfg.carry_ttl_seconds == 120);
  REQUIRE(cfg.policy.rules.size() == 2);
  CHECK(cfg.policy.rules[0].predicate == SelectionRule::Predicate::CumulativeTokensAtLeast);
  CHECK(cfg.policy.rules[0].threshold == 5000);
  CHECK(cfg.policy.rules[0].text == "Long-context reminder.");
  CHECK(cfg.policy.rules[1].predicate == SelectionRule::Predicate::ContentMatches);
  CHECK(cfg.policy.rules[1].pattern == "ignore previous");
}

TEST_CASE("config: defaults stand without a file") {
  auto cfg = parse_config("");
  CHECK(cfg.listen_host == "127.0.0.1");
  CHECK(cfg.listen_port == 8080);
  CHECK(cfg.upstream.empty());
  CHECK(cfg.policy.interval_tokens == 1000);
  CHECK(cfg.policy.mode == InjectionMode::Inline);
  CHECK(cfg.carry_ttl_seconds == 600);
}

TEST_CASE("config: rejects what it does not know") {
  CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("mode = sideways\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("targets = user,unknown\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("interval_tokens = abc\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("listen = nohostport\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("just a line\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("rule.0.predicate = made_up:1\nrule.0.text = x\n"), PolicyError);
}

TEST_CASE("config: policy invariants checked at load time") {
  CHECK_THROWS_AS(parse_config("interval_tokens = 0\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("interruption_text =\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("sentinel_open = X\nsentinel_close = X\n"), PolicyError);
}

TEST_CASE("config: rules need both predicate and text") {
  CHECK_THROWS_AS(parse_config("rule.0.text = hello\n"), PolicyError);
  CHECK_THROWS_AS(parse_config("rule.0.predicate = turn_index_at_least:2\n"), PolicyError);
}

TEST_CASE("config: values may contain '='") {
  auto cfg = parse_config("sentinel_open = <<open id={n} off={t}>>\nsentinel_close = <<close>>\n");
  CHECK(cfg.policy.sentinel_open == "<<open id={n} off={t}>>");
}
