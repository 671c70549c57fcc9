#pragma once

// Interruption policy: how often to inject, what text to use, and how the
// injected blocks are delimited on the wire.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ric/errors.hpp"
#include "ric/tokens.hpp"

namespace ric {

enum class InjectionMode { Inline, TurnLevel };
enum class InjectionTarget { UserInput, CoT };

// Where a given injection physically happened.
enum class RecordMode { Inline, TurnLevel, CoT };

inline const char* record_mode_name(RecordMode m) {
  switch (m) {
    case RecordMode::Inline: return "inline";
    case RecordMode::TurnLevel: return "turn_level";
    case RecordMode::CoT: return "cot";
  }
  return "?";
}

// Context-dependent text selection: the first rule whose predicate matches
// wins, otherwise the policy's default text is used.
struct SelectionRule {
  enum class Predicate { CumulativeTokensAtLeast, TurnIndexAtLeast, ContentMatches };

  Predicate predicate = Predicate::CumulativeTokensAtLeast;
  std::uint64_t threshold = 0;  // for the *AtLeast predicates
  // For ContentMatches: a literal substring, or an anchored prefix when the
  // pattern starts with '^'. No regular expression engine.
  std::string pattern;
  std::string text;
};

struct InterruptionPolicy {
  TokenCount interval_tokens = 1000;  // t
  std::vector<SelectionRule> rules;
  std::string default_text = "Reminder: the instructions at the start of this conversation still apply.";
  InjectionMode mode = InjectionMode::Inline;
  std::set<InjectionTarget> targets{InjectionTarget::UserInput};
  // {n} expands to the record id, {t} to the token offset.
  std::string sentinel_open = "[[RIC-INT id={n} off={t}]]";
  std::string sentinel_close = "[[/RIC-INT]]";

  TokenCount interruption_tokens() const { return count_tokens(default_text); }
};

// One injection pinned to an exact token offset. Offsets are multiples of
// the policy interval, counted in non-injected tokens local to the injected
// stream (one message for inline mode, one conversation for turn-level and
// CoT injection).
struct InterruptionRecord {
  std::uint64_t id = 0;
  TokenCount offset_tokens = 0;
  std::string text;
  RecordMode mode = RecordMode::Inline;
};

inline void validate_policy(const InterruptionPolicy& policy) {
  if (policy.interval_tokens == 0) throw PolicyError("interval_tokens must be >= 1");
  if (policy.default_text.empty()) throw PolicyError("default interruption text must be non-empty");
  if (policy.sentinel_open.empty() || policy.sentinel_close.empty())
    throw PolicyError("sentinel markers must be non-empty");
  if (policy.sentinel_open == policy.sentinel_close)
    throw PolicyError("open and close sentinels must differ");
  if (count_tokens(policy.default_text) == 0)
    throw PolicyError("default interruption text must contain at least one token");
  for (const auto& rule : policy.rules) {
    if (rule.text.empty()) throw PolicyError("selection rule text must be non-empty");
    if (rule.predicate == SelectionRule::Predicate::ContentMatches && rule.pattern.empty())
      throw PolicyError("content_matches rule needs a pattern");
  }
}

}  // namespace ric
