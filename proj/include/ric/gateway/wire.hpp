#pragma once

// Chat-completion wire schema: {model, messages[{role, content}], stream,
// max_tokens, conversation_id} plus arbitrary extra fields, which pass
// through untouched in proxy mode.
//
// Anti-spoofing is enforced at the parse boundary: no inbound role string
// maps to the Interruption role, so external input can never claim Injected
// provenance. Injected turns serialize outward with role "system" — they
// are system prompting, and the sentinel wrapper keeps them identifiable.

#include <optional>
#include <string>

#include <json.hpp>

#include "ric/context.hpp"
#include "ric/errors.hpp"
#include "ric/policy.hpp"
#include "ric/rational.hpp"

namespace ric::gateway {

// 400-class problems with a request body.
class BadRequestError : public Error {
 public:
  explicit BadRequestError(const std::string& msg) : Error(msg) {}
};

// External input tried to claim an injected role.
class AntiSpoofError : public BadRequestError {
 public:
  explicit AntiSpoofError(const std::string& msg) : BadRequestError(msg) {}
};

struct ChatRequest {
  nlohmann::json body;  // original parse, for pass-through
  Context context;
  bool stream = false;
  std::optional<TokenCount> max_tokens;
  std::string conversation_id;
  std::string model;
};

inline ChatRequest parse_chat_request(const std::string& raw, std::size_t max_bytes) {
  if (raw.size() > max_bytes)
    throw BadRequestError("request body exceeds " + std::to_string(max_bytes) + " bytes");
  ChatRequest req;
  try {
    req.body = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw BadRequestError(std::string("request body is not valid JSON: ") + e.what());
  }
  if (!req.body.is_object()) throw BadRequestError("request body must be a JSON object");
  auto messages = req.body.find("messages");
  if (messages == req.body.end() || !messages->is_array() || messages->empty())
    throw BadRequestError("request needs a non-empty messages array");

  std::size_t index = 0;
  for (const auto& m : *messages) {
    if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
        !m["role"].is_string() || !m["content"].is_string())
      throw BadRequestError("messages[" + std::to_string(index) +
                            "] must have string role and content");
    const std::string role = m["role"].get<std::string>();
    const std::string content = m["content"].get<std::string>();
    Role parsed;
    if (role == "system")
      parsed = Role::SystemPrompt;
    else if (role == "user")
      parsed = Role::User;
    else if (role == "assistant")
      parsed = Role::Assistant;
    else if (role == "interruption")
      throw AntiSpoofError("messages[" + std::to_string(index) +
                           "] claims the interruption role; injected turns cannot arrive "
                           "from outside");
    else
      throw BadRequestError("messages[" + std::to_string(index) + "] has unknown role '" +
                            role + "'");
    try {
      req.context.add(Message::make(parsed, content, Provenance::External));
    } catch (const InvariantError& e) {
      throw BadRequestError("messages[" + std::to_string(index) + "]: " + e.what());
    } catch (const EncodingError& e) {
      throw BadRequestError("messages[" + std::to_string(index) + "]: " + e.what());
    }
    ++index;
  }

  if (auto it = req.body.find("stream"); it != req.body.end()) {
    if (!it->is_boolean()) throw BadRequestError("stream must be a boolean");
    req.stream = it->get<bool>();
  }
  if (auto it = req.body.find("max_tokens"); it != req.body.end()) {
    if (!it->is_number_unsigned()) throw BadRequestError("max_tokens must be a non-negative integer");
    req.max_tokens = it->get<TokenCount>();
  }
  if (auto it = req.body.find("conversation_id"); it != req.body.end()) {
    if (!it->is_string()) throw BadRequestError("conversation_id must be a string");
    req.conversation_id = it->get<std::string>();
  }
  if (auto it = req.body.find("model"); it != req.body.end() && it->is_string())
    req.model = it->get<std::string>();
  return req;
}

inline const char* wire_role(Role role) {
  switch (role) {
    case Role::SystemPrompt: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Interruption: return "system";  // forwardable system prompting
  }
  return "user";
}

inline nlohmann::json messages_json(const Context& context) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : context.messages())
    arr.push_back({{"role", wire_role(m.role)}, {"content", m.content}});
  return arr;
}

inline nlohmann::json ratio_json(const RatioReport& report) {
  nlohmann::json j;
  j["s_tokens"] = report.s_tokens;
  j["l_tokens"] = report.l_tokens;
  j["measured_ratio"] = to_decimal_string(report.measured_ratio);
  if (report.analytic_ratio) j["analytic_ratio"] = to_decimal_string(*report.analytic_ratio);
  if (report.bound_q) j["bound_q"] = to_decimal_string(*report.bound_q);
  return j;
}

inline nlohmann::json record_json(const InterruptionRecord& record, std::size_t message_index,
                                  const std::string& digest) {
  nlohmann::json j;
  j["id"] = record.id;
  j["off"] = record.offset_tokens;
  j["mode"] = record_mode_name(record.mode);
  j["text"] = record.text;
  j["digest"] = digest;
  j["message_index"] = message_index;
  return j;
}

inline nlohmann::json error_json(const std::string& type, const std::string& message) {
  return nlohmann::json{{"error", {{"type", type}, {"message", message}}}};
}

// Server-sent event framing: event types content, interruption, error, done.
inline std::string sse_event(const std::string& event, const nlohmann::json& data) {
  return "event: " + event + "\ndata: " + data.dump() + "\n\n";
}

}  // namespace ric::gateway
