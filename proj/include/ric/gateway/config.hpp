#pragma once

// Flat key = value configuration for the gateway and CLI.
//
//   listen = 127.0.0.1:8080
//   upstream = mock:seed=7,total=2500        (or http://host:port; optional)
//   interval_tokens = 1000
//   interruption_text = Remember the house rules.
//   mode = inline                            (or turn_level)
//   targets = user,cot
//   sentinel_open = [[RIC-INT id={n} off={t}]]
//   sentinel_close = [[/RIC-INT]]
//   audit_log = ./audit.ndjson
//   carry_ttl_seconds = 600
//   rule.0.predicate = cumulative_tokens_at_least:5000
//   rule.0.text = Long-context reminder.
//
// Lines starting with '#' and blank lines are ignored. Unknown keys are
// configuration errors, not warnings.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "ric/errors.hpp"
#include "ric/policy.hpp"

namespace ric::gateway {

struct GatewayConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::string upstream;  // empty means transform-only mode
  InterruptionPolicy policy;
  std::string audit_log_path;  // empty disables the audit log
  std::uint64_t carry_ttl_seconds = 600;
  std::size_t max_body_bytes = 8 * 1024 * 1024;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  if (value.empty()) throw PolicyError("config key '" + key + "' needs a number");
  std::uint64_t out = 0;
  for (char c : value) {
    if (c < '0' || c > '9')
      throw PolicyError("config key '" + key + "' is not a number: '" + value + "'");
    out = out * 10 + std::uint64_t(c - '0');
  }
  return out;
}

inline SelectionRule::Predicate parse_predicate(const std::string& name) {
  if (name == "cumulative_tokens_at_least") return SelectionRule::Predicate::CumulativeTokensAtLeast;
  if (name == "turn_index_at_least") return SelectionRule::Predicate::TurnIndexAtLeast;
  if (name == "content_matches") return SelectionRule::Predicate::ContentMatches;
  throw PolicyError("unknown rule predicate '" + name + "'");
}

}  // namespace detail

inline GatewayConfig parse_config(std::string_view text) {
  GatewayConfig cfg;
  std::map<std::uint64_t, SelectionRule> rules;
  std::map<std::uint64_t, bool> rule_has_text;
  std::map<std::uint64_t, bool> rule_has_predicate;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string line = detail::trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;

    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw PolicyError("config line " + std::to_string(line_no) + " has no '='");
    std::string key = detail::trim(std::string_view(line).substr(0, eq));
    std::string value = detail::trim(std::string_view(line).substr(eq + 1));

    if (key == "listen") {
      std::size_t colon = value.rfind(':');
      if (colon == std::string::npos || colon + 1 >= value.size())
        throw PolicyError("listen must be host:port, got '" + value + "'");
      cfg.listen_host = value.substr(0, colon);
      cfg.listen_port = int(detail::parse_u64("listen", value.substr(colon + 1)));
    } else if (key == "upstream") {
      cfg.upstream = value;
    } else if (key == "interval_tokens") {
      cfg.policy.interval_tokens = detail::parse_u64(key, value);
    } else if (key == "interruption_text") {
      cfg.policy.default_text = value;
    } else if (key == "mode") {
      if (value == "inline")
        cfg.policy.mode = InjectionMode::Inline;
      else if (value == "turn_level")
        cfg.policy.mode = InjectionMode::TurnLevel;
      else
        throw PolicyError("mode must be 'inline' or 'turn_level', got '" + value + "'");
    } else if (key == "targets") {
      cfg.policy.targets.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item == "user")
          cfg.policy.targets.insert(InjectionTarget::UserInput);
        else if (item == "cot")
          cfg.policy.targets.insert(InjectionTarget::CoT);
        else
          throw PolicyError("unknown target '" + item + "' (expected user, cot)");
      }
      if (cfg.policy.targets.empty()) throw PolicyError("targets must not be empty");
    } else if (key == "sentinel_open") {
      cfg.policy.sentinel_open = value;
    } else if (key == "sentinel_close") {
      cfg.policy.sentinel_close = value;
    } else if (key == "audit_log") {
      cfg.audit_log_path = value;
    } else if (key == "carry_ttl_seconds") {
      cfg.carry_ttl_seconds = detail::parse_u64(key, value);
    } else if (key.rfind("rule.", 0) == 0) {
      std::size_t dot = key.find('.', 5);
      if (dot == std::string::npos)
        throw PolicyError("rule key must be rule.N.predicate or rule.N.text: '" + key + "'");
      std::uint64_t index = detail::parse_u64(key, key.substr(5, dot - 5));
      std::string field = key.substr(dot + 1);
      if (field == "predicate") {
        std::size_t colon = value.find(':');
        std::string name = colon == std::string::npos ? value : value.substr(0, colon);
        std::string arg = colon == std::string::npos ? "" : value.substr(colon + 1);
        auto& rule = rules[index];
        rule_has_predicate[index] = true;
        rule.predicate = detail::parse_predicate(name);
        if (rule.predicate == SelectionRule::Predicate::ContentMatches) {
          if (arg.empty()) throw PolicyError("content_matches rule needs a pattern");
          rule.pattern = arg;
        } else {
          rule.threshold = detail::parse_u64(key, arg);
        }
      } else if (field == "text") {
        rules[index].text = value;
        rule_has_text[index] = true;
      } else {
        throw PolicyError("unknown rule field '" + field + "'");
      }
    } else {
      throw PolicyError("unknown config key '" + key + "'");
    }
  }

  for (auto& [index, rule] : rules) {
    if (!rule_has_predicate[index])
      throw PolicyError("rule." + std::to_string(index) + " has no predicate");
    if (!rule_has_text[index])
      throw PolicyError("rule." + std::to_string(index) + " has no text");
    if (rule.text.empty())
      throw PolicyError("rule." + std::to_string(index) + " text is empty");
    cfg.policy.rules.push_back(std::move(rule));
  }

  validate_policy(cfg.policy);
  return cfg;
}

inline GatewayConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PolicyError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ric::gateway
