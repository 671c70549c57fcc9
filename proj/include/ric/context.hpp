#pragma once

// Conversation data model: system prompt, turns, injected interruptions,
// and the measured system-share ratio over them.
//
// Context values are treated as immutable once built; every transformation
// in this library takes a const Context& and returns a new value.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ric/errors.hpp"
#include "ric/rational.hpp"
#include "ric/tokens.hpp"

namespace ric {

enum class Role { SystemPrompt, User, Assistant, Interruption };

// External content arrived over the wire; Injected content was produced by
// this library. No external input path may ever construct Injected.
enum class Provenance { External, Injected };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::SystemPrompt: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Interruption: return "interruption";
  }
  return "?";
}

struct Message {
  Role role = Role::User;
  std::string content;
  TokenCount token_len = 0;  // always count_tokens(content)
  Provenance provenance = Provenance::External;

  static Message make(Role role, std::string content, Provenance provenance = Provenance::External) {
    if (role == Role::Interruption && provenance != Provenance::Injected)
      throw InvariantError("interruption messages must carry Injected provenance");
    TokenCount len = count_tokens(content);
    return Message{role, std::move(content), len, provenance};
  }
};

class Context {
 public:
  Context() = default;
  explicit Context(std::vector<Message> messages) {
    for (auto& m : messages) add(std::move(m));
  }

  void add(Message m) {
    if (m.role == Role::SystemPrompt && !messages_.empty())
      throw InvariantError("system prompt must be the first message");
    messages_.push_back(std::move(m));
  }

  const std::vector<Message>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }
  std::size_t size() const { return messages_.size(); }

  const Message* system_prompt() const {
    if (!messages_.empty() && messages_.front().role == Role::SystemPrompt) return &messages_.front();
    return nullptr;
  }

 private:
  std::vector<Message> messages_;
};

// Measured (and optionally analytic) system-share accounting for a context.
// s_tokens counts the system prompt plus everything injected; l_tokens is
// the full context. The analytic fields are filled by callers that know the
// policy parameters (see analytics.hpp).
struct RatioReport {
  TokenCount s_tokens = 0;
  TokenCount l_tokens = 0;
  Rational measured_ratio;
  std::optional<Rational> analytic_ratio;
  std::optional<Rational> bound_q;
};

inline TokenCount total_length(const Context& context) {
  TokenCount total = 0;
  for (const auto& m : context.messages()) total += m.token_len;
  return total;
}

// Tokens that arrived from outside (provenance External), i.e. the organic
// context length before any injection.
inline TokenCount external_length(const Context& context) {
  TokenCount total = 0;
  for (const auto& m : context.messages())
    if (m.provenance == Provenance::External) total += m.token_len;
  return total;
}

inline RatioReport system_share(const Context& context) {
  RatioReport report;
  for (const auto& m : context.messages()) {
    report.l_tokens += m.token_len;
    if (m.role == Role::SystemPrompt || m.provenance == Provenance::Injected)
      report.s_tokens += m.token_len;
  }
  if (report.l_tokens == 0) throw UndefinedRatioError("system share of an empty context");
  report.measured_ratio = Rational(Int128(report.s_tokens), Int128(report.l_tokens));
  return report;
}

}  // namespace ric
