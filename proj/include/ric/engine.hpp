#pragma once

// The injection engine: plans token offsets, performs lossless inline and
// turn-level injection of interruption text, selects context-dependent
// text, and strips injected blocks back out for audit round-trips.
//
// Inline blocks are wrapped in the policy's sentinel markers. The open
// sentinel may carry "{n}" (record id) and "{t}" (token offset)
// placeholders; the close sentinel is a fixed literal. A user text that
// already contains either marker is refused outright — escaping would make
// audit logs ambiguous.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ric/context.hpp"
#include "ric/errors.hpp"
#include "ric/policy.hpp"
#include "ric/tokens.hpp"

namespace ric {

// Planned injection offsets for a text of `length` tokens: t, 2t, ..., nt
// with n = floor((length-1)/t). An interruption that nothing follows is
// never planned, so an exact multiple gets no trailing offset.
inline std::vector<TokenCount> plan_injections(TokenCount length, TokenCount interval) {
  if (interval == 0) throw PolicyError("injection interval must be >= 1");
  std::vector<TokenCount> offsets;
  if (length <= 1) return offsets;
  TokenCount n = (length - 1) / interval;
  offsets.reserve(n);
  for (TokenCount k = 1; k <= n; ++k) offsets.push_back(k * interval);
  return offsets;
}

struct SelectionFeatures {
  TokenCount cumulative_tokens = 0;
  std::uint64_t turn_index = 0;
  std::string_view recent_content;
};

inline const std::string& select_text(const InterruptionPolicy& policy,
                                      const SelectionFeatures& features) {
  for (const auto& rule : policy.rules) {
    switch (rule.predicate) {
      case SelectionRule::Predicate::CumulativeTokensAtLeast:
        if (features.cumulative_tokens >= rule.threshold) return rule.text;
        break;
      case SelectionRule::Predicate::TurnIndexAtLeast:
        if (features.turn_index >= rule.threshold) return rule.text;
        break;
      case SelectionRule::Predicate::ContentMatches:
        if (!rule.pattern.empty() && rule.pattern.front() == '^') {
          if (features.recent_content.substr(0, rule.pattern.size() - 1) ==
              std::string_view(rule.pattern).substr(1))
            return rule.text;
        } else if (features.recent_content.find(rule.pattern) != std::string_view::npos) {
          return rule.text;
        }
        break;
    }
  }
  return policy.default_text;
}

namespace sentinel {

// The open sentinel split at its placeholders: literal parts with decimal
// digit runs expected between them.
class OpenPattern {
 public:
  explicit OpenPattern(const std::string& tmpl) {
    std::size_t pos = 0;
    std::string part;
    while (pos < tmpl.size()) {
      if (tmpl.compare(pos, 3, "{n}") == 0 || tmpl.compare(pos, 3, "{t}") == 0) {
        parts_.push_back(part);
        part.clear();
        pos += 3;
      } else {
        part.push_back(tmpl[pos]);
        ++pos;
      }
    }
    parts_.push_back(part);
    if (parts_.front().empty())
      throw PolicyError("open sentinel must not begin with a placeholder");
    // Digit runs between literals match greedily, so any literal that
    // follows a placeholder must not itself begin with a digit (the final
    // one may be empty when the template ends with a placeholder).
    for (std::size_t i = 1; i < parts_.size(); ++i) {
      if (parts_[i].empty() && i + 1 < parts_.size())
        throw PolicyError("open sentinel placeholders must be separated");
      if (!parts_[i].empty() && parts_[i][0] >= '0' && parts_[i][0] <= '9')
        throw PolicyError("open sentinel literal after a placeholder must not begin with a digit");
    }
  }

  // Length of a match starting exactly at text[pos], or nullopt.
  std::optional<std::size_t> match_at(std::string_view text, std::size_t pos) const {
    std::size_t p = pos;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      const std::string& lit = parts_[i];
      if (text.compare(p, lit.size(), lit) != 0) return std::nullopt;
      p += lit.size();
      if (i + 1 < parts_.size()) {
        std::size_t digits = 0;
        while (p < text.size() && text[p] >= '0' && text[p] <= '9') {
          ++p;
          ++digits;
        }
        if (digits == 0) return std::nullopt;
      }
    }
    return p - pos;
  }

  // First match at or after `from`: (position, length).
  std::optional<std::pair<std::size_t, std::size_t>> find(std::string_view text,
                                                          std::size_t from) const {
    const std::string& head = parts_.front();
    std::size_t pos = from;
    while ((pos = text.find(head, pos)) != std::string_view::npos) {
      if (auto len = match_at(text, pos)) return std::make_pair(pos, *len);
      ++pos;
    }
    return std::nullopt;
  }

 private:
  std::vector<std::string> parts_;
};

inline std::string render_open(const InterruptionPolicy& policy, std::uint64_t id,
                               TokenCount offset) {
  std::string out;
  const std::string& tmpl = policy.sentinel_open;
  out.reserve(tmpl.size() + 8);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    if (tmpl.compare(pos, 3, "{n}") == 0) {
      out += std::to_string(id);
      pos += 3;
    } else if (tmpl.compare(pos, 3, "{t}") == 0) {
      out += std::to_string(offset);
      pos += 3;
    } else {
      out.push_back(tmpl[pos]);
      ++pos;
    }
  }
  return out;
}

// True when `text` contains either sentinel marker verbatim (the open
// marker with any placeholder values).
inline bool collides(const InterruptionPolicy& policy, std::string_view text) {
  OpenPattern open(policy.sentinel_open);
  if (open.find(text, 0)) return true;
  return text.find(policy.sentinel_close) != std::string_view::npos;
}

}  // namespace sentinel

// Sentinel-wrapped interruption block as it appears on the wire.
inline std::string render_block(const InterruptionPolicy& policy, std::uint64_t id,
                                TokenCount offset, const std::string& text) {
  return sentinel::render_open(policy, id, offset) + text + policy.sentinel_close;
}

inline Message make_interruption_message(const InterruptionPolicy& policy, std::uint64_t id,
                                         TokenCount offset, const std::string& text) {
  return Message::make(Role::Interruption, render_block(policy, id, offset, text),
                       Provenance::Injected);
}

// Syntactic check that a message content is one sentinel-wrapped block.
inline bool is_sentinel_wrapped(std::string_view content, const InterruptionPolicy& policy) {
  sentinel::OpenPattern open(policy.sentinel_open);
  auto len = open.match_at(content, 0);
  if (!len) return false;
  const std::string& close = policy.sentinel_close;
  return content.size() >= *len + close.size() &&
         content.compare(content.size() - close.size(), close.size(), close) == 0;
}

namespace detail {

inline void require_clean_interruption_text(const InterruptionPolicy& policy,
                                            const std::string& text) {
  if (sentinel::collides(policy, text))
    throw PolicyError("interruption text contains a sentinel marker");
}

}  // namespace detail

struct InlineInjection {
  Message message;
  std::vector<InterruptionRecord> records;
  TokenCount injected_tokens = 0;  // true token delta, counted not assumed
};

// Interleaves sentinel-wrapped interruption blocks into a user message at
// every interval boundary. strip_interruptions() on the result returns the
// original content byte-for-byte.
inline InlineInjection inject_inline(const Message& message, const InterruptionPolicy& policy,
                                     std::uint64_t id_start,
                                     const SelectionFeatures& base = {}) {
  validate_policy(policy);
  if (message.role != Role::User)
    throw InvariantError("inline injection applies to user messages only");
  if (policy.mode != InjectionMode::Inline)
    throw PolicyError("policy mode is not inline");
  if (sentinel::collides(policy, message.content))
    throw SentinelCollisionError("user content contains a sentinel marker");

  auto segments = split_at_intervals(message.content, policy.interval_tokens);
  if (segments.size() <= 1) return InlineInjection{message, {}, 0};

  InlineInjection out;
  std::string content;
  content.reserve(message.content.size() + segments.size() * 64);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    content += segments[i].text;
    if (i + 1 == segments.size()) break;
    TokenCount offset = TokenCount(i + 1) * policy.interval_tokens;
    std::uint64_t id = id_start + i;
    SelectionFeatures features{base.cumulative_tokens + offset, base.turn_index,
                               segments[i].text};
    const std::string& text = select_text(policy, features);
    detail::require_clean_interruption_text(policy, text);
    content += render_block(policy, id, offset, text);
    out.records.push_back(InterruptionRecord{id, offset, text, RecordMode::Inline});
  }
  out.injected_tokens = count_tokens(content) - message.token_len;
  out.message = Message::make(message.role, std::move(content), message.provenance);
  return out;
}

struct TurnInjection {
  Context context;
  std::vector<InterruptionRecord> records;
  TokenCount carry = 0;
};

// Walks the turns of a context accumulating non-injected user/assistant
// tokens on top of `carry`; every time the accumulator reaches the interval
// at a turn boundary, an Interruption message is inserted after that turn
// and one interval is drained. The residual accumulator is returned so the
// next request of the same conversation keeps counting where this one
// stopped. Record offsets are the drained schedule marks (id+1)*t.
inline TurnInjection inject_turns(const Context& context, const InterruptionPolicy& policy,
                                  TokenCount carry, std::uint64_t id_start = 0) {
  validate_policy(policy);
  if (policy.mode != InjectionMode::TurnLevel)
    throw PolicyError("policy mode is not turn_level");

  TurnInjection out;
  out.carry = carry;
  const TokenCount t = policy.interval_tokens;
  std::uint64_t turn_index = 0;
  for (const auto& m : context.messages()) {
    out.context.add(m);
    bool counted = m.provenance == Provenance::External &&
                   (m.role == Role::User || m.role == Role::Assistant);
    if (counted) {
      out.carry += m.token_len;
      while (out.carry >= t) {
        std::uint64_t id = id_start + out.records.size();
        TokenCount offset = TokenCount(id + 1) * t;
        SelectionFeatures features{offset, turn_index, m.content};
        const std::string& text = select_text(policy, features);
        detail::require_clean_interruption_text(policy, text);
        out.context.add(make_interruption_message(policy, id, offset, text));
        out.records.push_back(InterruptionRecord{id, offset, text, RecordMode::TurnLevel});
        out.carry -= t;
      }
      ++turn_index;
    }
  }
  return out;
}

// Removes every well-formed sentinel-delimited block. Unbalanced or nested
// sentinels are an error: an audit round-trip must never guess.
inline std::string strip_interruptions(std::string_view text, const InterruptionPolicy& policy) {
  sentinel::OpenPattern open(policy.sentinel_open);
  const std::string& close = policy.sentinel_close;
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  for (;;) {
    auto o = open.find(text, pos);
    std::size_t c = text.find(close, pos);
    if (!o && c == std::string_view::npos) {
      out += text.substr(pos);
      return out;
    }
    if (c != std::string_view::npos && (!o || c < o->first))
      throw MalformedInjectionError("close sentinel without matching open at offset " +
                                    std::to_string(c));
    // o is set and precedes any close.
    std::size_t block_start = o->first;
    std::size_t inner = o->first + o->second;
    std::size_t end = text.find(close, inner);
    if (end == std::string_view::npos)
      throw MalformedInjectionError("unterminated sentinel block at offset " +
                                    std::to_string(block_start));
    if (auto nested = open.find(text, inner); nested && nested->first < end)
      throw MalformedInjectionError("nested sentinel block at offset " +
                                    std::to_string(nested->first));
    out += text.substr(pos, block_start - pos);
    pos = end + close.size();
  }
}

// Drops Interruption messages, keeping everything else in order.
inline Context strip_interruption_messages(const Context& context) {
  Context out;
  for (const auto& m : context.messages())
    if (m.role != Role::Interruption) out.add(m);
  return out;
}

}  // namespace ric
