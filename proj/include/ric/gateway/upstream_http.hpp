#pragma once

// UpstreamClient over HTTP: POSTs the context to a chat-completions
// endpoint speaking the gateway's own SSE wire (content / error / done
// events) and exposes the content deltas as a TokenStream. The HTTP read
// runs on a worker thread feeding a bounded-latency queue; stop() cancels
// the transfer.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "ric/errors.hpp"
#include "ric/gateway/wire.hpp"
#include "ric/interleave.hpp"

namespace ric::gateway {

class HttpTokenStream : public TokenStream {
 public:
  HttpTokenStream(const std::string& base_url, nlohmann::json request_body)
      : base_url_(base_url), request_body_(std::move(request_body)) {
    worker_ = std::thread([this] { run(); });
  }

  ~HttpTokenStream() override {
    stop();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<std::string> next() override {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return !queue_.empty(); });
    Item item = std::move(queue_.front());
    queue_.pop_front();
    switch (item.kind) {
      case Item::Chunk: return std::move(item.payload);
      case Item::End: push_front_end(); return std::nullopt;
      case Item::Error: push_front_end(); throw UpstreamError(item.payload);
    }
    return std::nullopt;
  }

  void stop() override {
    cancelled_.store(true);
    cv_.notify_all();
  }

 private:
  struct Item {
    enum Kind { Chunk, End, Error } kind;
    std::string payload;
  };

  // Keeps next() non-blocking after the stream finished.
  void push_front_end() { queue_.push_front(Item{Item::End, {}}); }

  void push(Item item) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      queue_.push_back(std::move(item));
    }
    cv_.notify_all();
  }

  void handle_event(const std::string& event, const std::string& data) {
    if (event == "content") {
      auto j = nlohmann::json::parse(data, nullptr, false);
      if (j.is_object() && j.contains("text") && j["text"].is_string())
        push(Item{Item::Chunk, j["text"].get<std::string>()});
    } else if (event == "error") {
      auto j = nlohmann::json::parse(data, nullptr, false);
      std::string msg = "upstream error";
      if (j.is_object() && j.contains("message") && j["message"].is_string())
        msg = j["message"].get<std::string>();
      push(Item{Item::Error, msg});
      saw_terminal_ = true;
    } else if (event == "done") {
      push(Item{Item::End, {}});
      saw_terminal_ = true;
    }
    // Anything else (e.g. interruption annotations from a chained gateway)
    // is metadata, never model text; skip it.
  }

  // Consume complete "field: value" blocks separated by a blank line.
  void feed_sse(const char* data, std::size_t len) {
    buffer_.append(data, len);
    std::size_t pos;
    while ((pos = buffer_.find("\n\n")) != std::string::npos) {
      std::string block = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 2);
      std::string event;
      std::string payload;
      std::size_t line_start = 0;
      while (line_start <= block.size()) {
        std::size_t eol = block.find('\n', line_start);
        if (eol == std::string::npos) eol = block.size();
        std::string line = block.substr(line_start, eol - line_start);
        line_start = eol + 1;
        if (line.rfind("event: ", 0) == 0) event = line.substr(7);
        else if (line.rfind("data: ", 0) == 0) payload = line.substr(6);
      }
      if (!event.empty()) handle_event(event, payload);
    }
  }

  void run() {
    httplib::Client client(base_url_);
    client.set_read_timeout(300, 0);
    nlohmann::json body = request_body_;
    body["stream"] = true;
    httplib::Request req;
    req.method = "POST";
    req.path = "/v1/chat/completions";
    req.body = body.dump();
    req.set_header("Content-Type", "application/json");
    req.content_receiver = [this](const char* data, std::size_t len, std::uint64_t,
                                  std::uint64_t) {
      if (cancelled_.load()) return false;
      feed_sse(data, len);
      return true;
    };
    auto result = client.send(req);
    if (saw_terminal_) return;
    if (cancelled_.load()) {
      push(Item{Item::End, {}});
      return;
    }
    if (!result) {
      push(Item{Item::Error, "upstream transport error: " + httplib::to_string(result.error())});
    } else if (result->status != 200) {
      push(Item{Item::Error, "upstream returned status " + std::to_string(result->status)});
    } else {
      push(Item{Item::End, {}});
    }
  }

  std::string base_url_;
  nlohmann::json request_body_;
  std::string buffer_;
  bool saw_terminal_ = false;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  std::atomic<bool> cancelled_{false};
  std::thread worker_;
};

// Starts one HTTP stream per start() call. `passthrough` is the original
// request body; its unknown fields travel to the upstream untouched, with
// only messages/stream replaced.
class HttpUpstreamClient : public UpstreamClient {
 public:
  HttpUpstreamClient(std::string base_url, nlohmann::json passthrough)
      : base_url_(std::move(base_url)), passthrough_(std::move(passthrough)) {}

  std::unique_ptr<TokenStream> start(const Context& context) override {
    nlohmann::json body = passthrough_.is_object() ? passthrough_ : nlohmann::json::object();
    body["messages"] = messages_json(context);
    body.erase("conversation_id");  // conversation state belongs to this hop
    return std::make_unique<HttpTokenStream>(base_url_, std::move(body));
  }

 private:
  std::string base_url_;
  nlohmann::json passthrough_;
};

}  // namespace ric::gateway
