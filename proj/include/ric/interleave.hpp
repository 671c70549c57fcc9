#pragma once

// Halt/inject/resume interleaving over a streaming generation upstream.
//
// The session consumes the upstream token stream, and every time the
// interval-th emitted token is provably complete (the next token has
// started), it halts the stream, appends the completed span plus an
// Interruption message to the working context, and resumes by starting a
// fresh stream over the extended context — the only resumption primitive
// real completion endpoints offer.
//
// Cadence is measured in model-emitted tokens only; injected text never
// counts toward the next interval. Injections into the model's own output
// are separate Interruption messages, not inline sentinels spliced into
// its text.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ric/context.hpp"
#include "ric/engine.hpp"
#include "ric/errors.hpp"
#include "ric/policy.hpp"
#include "ric/tokens.hpp"

namespace ric {

// Pull-based token stream. next() returns the next byte chunk (chunks may
// split tokens arbitrarily), nullopt at end of stream, and throws
// UpstreamError on failure. stop() tells the producer the consumer halted.
class TokenStream {
 public:
  virtual ~TokenStream() = default;
  virtual std::optional<std::string> next() = 0;
  virtual void stop() {}
};

// Behavioral contract for the generation endpoint: start() opens a stream
// over the given context; starting again with an extended context (the
// prior partial output plus injected text) constitutes resumption.
class UpstreamClient {
 public:
  virtual ~UpstreamClient() = default;
  virtual std::unique_ptr<TokenStream> start(const Context& context) = 0;
};

enum class SessionState { Generating, Injecting, Done, Failed };

inline const char* session_state_name(SessionState s) {
  switch (s) {
    case SessionState::Generating: return "generating";
    case SessionState::Injecting: return "injecting";
    case SessionState::Done: return "done";
    case SessionState::Failed: return "failed";
  }
  return "?";
}

struct InterleaveCallbacks {
  // Fired when an output span completes (at each injection boundary and at
  // end of stream). Spans concatenate to the transcript.
  std::function<void(std::string_view)> on_segment;
  std::function<void(const InterruptionRecord&)> on_interruption;
};

// Single-threaded state machine for one generation. Feed it upstream bytes;
// it cuts interval-sized spans, performs injections, and requests a resume
// (fresh upstream start) after each one.
class GenerationSession {
 public:
  GenerationSession(Context base, InterruptionPolicy policy, std::uint64_t id_start = 0,
                    TokenCount max_tokens = std::numeric_limits<TokenCount>::max(),
                    InterleaveCallbacks callbacks = {})
      : base_(std::move(base)),
        policy_(std::move(policy)),
        id_start_(id_start),
        max_tokens_(max_tokens),
        callbacks_(std::move(callbacks)),
        working_(base_),
        scanner_(policy_.interval_tokens) {
    validate_policy(policy_);
  }

  SessionState state() const { return state_; }
  const std::string& error() const { return error_; }
  const std::vector<std::string>& segments() const { return segments_; }
  const std::vector<InterruptionRecord>& records() const { return records_; }
  const std::string& transcript() const { return transcript_; }
  TokenCount emitted_tokens() const { return completed_tokens_ + scanner_.tokens_started(); }
  TokenCount tokens_since_injection() const { return scanner_.tokens_started(); }

  // True once after each injection; the driver must restart the upstream.
  bool take_resume_request() {
    bool r = resume_requested_;
    resume_requested_ = false;
    return r;
  }

  // Context to hand the upstream on (re)start: base, completed span /
  // interruption pairs, and the validated prefix of any partial span.
  Context resume_context() const {
    Context ctx = working_;
    std::string_view partial = std::string_view(pending_).substr(0, scanner_.scanned());
    if (!partial.empty()) ctx.add(Message::make(Role::Assistant, std::string(partial)));
    return ctx;
  }

  // Final context: base + alternating (Assistant span, Interruption) +
  // trailing Assistant span. Only meaningful once Done or Failed.
  const Context& final_context() const { return working_; }

  void feed(std::string_view chunk) {
    if (state_ != SessionState::Generating)
      throw Error("feed() on a session that is " + std::string(session_state_name(state_)));
    pending_.append(chunk);
    pump();
  }

  // Upstream signalled normal completion.
  void finish() {
    if (state_ != SessionState::Generating) return;
    scanner_.scan(pending_, /*final_input=*/true);  // surfaces truncated UTF-8
    flush_pending();
    state_ = SessionState::Done;
  }

  void fail(std::string reason) {
    if (state_ == SessionState::Done || state_ == SessionState::Failed) return;
    // Keep only the validated prefix so the partial transcript stays
    // well-formed for audit.
    pending_.resize(scanner_.scanned());
    flush_pending();
    error_ = std::move(reason);
    state_ = SessionState::Failed;
  }

 private:
  void pump() {
    for (;;) {
      scanner_.scan(pending_, /*final_input=*/false);
      TokenCount allowed =
          max_tokens_ > completed_tokens_ ? max_tokens_ - completed_tokens_ : 0;
      if (scanner_.tokens_started() > allowed) {
        truncate_to(allowed);
        state_ = SessionState::Done;
        return;
      }
      // A boundary at or beyond the budget is caught by the branch above
      // (a found split implies interval+1 tokens started).
      if (scanner_.split_found()) {
        cut_segment(scanner_.split_pos());
        inject();
        continue;
      }
      return;
    }
  }

  void cut_segment(std::size_t split_pos) {
    std::string seg = pending_.substr(0, split_pos);
    pending_.erase(0, split_pos);
    scanner_ = detail::TokenScanner(policy_.interval_tokens);
    completed_tokens_ += policy_.interval_tokens;
    commit_segment(std::move(seg));
  }

  void truncate_to(TokenCount allowed) {
    if (allowed == 0) {
      pending_.clear();
      scanner_ = detail::TokenScanner(policy_.interval_tokens);
      return;
    }
    detail::TokenScanner cutter(allowed);
    cutter.scan(pending_, /*final_input=*/false);
    if (cutter.split_found()) pending_.resize(cutter.split_pos());
    detail::TokenScanner recount(0);
    recount.scan(pending_, /*final_input=*/false);
    completed_tokens_ += recount.tokens_started();
    scanner_ = detail::TokenScanner(policy_.interval_tokens);
    std::string seg;
    seg.swap(pending_);
    commit_segment(std::move(seg));
  }

  void flush_pending() {
    completed_tokens_ += scanner_.tokens_started();
    scanner_ = detail::TokenScanner(policy_.interval_tokens);
    if (pending_.empty()) return;
    std::string seg;
    seg.swap(pending_);
    commit_segment(std::move(seg));
  }

  void commit_segment(std::string seg) {
    transcript_ += seg;
    segments_.push_back(std::move(seg));
    working_.add(Message::make(Role::Assistant, segments_.back()));
    if (callbacks_.on_segment) callbacks_.on_segment(segments_.back());
  }

  void inject() {
    state_ = SessionState::Injecting;
    std::uint64_t id = id_start_ + records_.size();
    TokenCount offset = completed_tokens_;
    SelectionFeatures features{offset, segments_.size() - 1, segments_.back()};
    const std::string& text = select_text(policy_, features);
    detail::require_clean_interruption_text(policy_, text);
    records_.push_back(InterruptionRecord{id, offset, text, RecordMode::CoT});
    working_.add(make_interruption_message(policy_, id, offset, text));
    if (callbacks_.on_interruption) callbacks_.on_interruption(records_.back());
    state_ = SessionState::Generating;
    resume_requested_ = true;
  }

  Context base_;
  InterruptionPolicy policy_;
  std::uint64_t id_start_;
  TokenCount max_tokens_;
  InterleaveCallbacks callbacks_;
  Context working_;  // base + committed spans and interruptions

  std::string pending_;
  detail::TokenScanner scanner_;
  std::string transcript_;
  std::vector<std::string> segments_;
  std::vector<InterruptionRecord> records_;
  TokenCount completed_tokens_ = 0;
  SessionState state_ = SessionState::Generating;
  bool resume_requested_ = false;
  std::string error_;
};

struct RunResult {
  SessionState state = SessionState::Done;
  std::string transcript;
  std::vector<std::string> segments;
  std::vector<InterruptionRecord> records;
  Context final_context;
  TokenCount emitted_tokens = 0;
  std::string error;
};

// Drives a full generation: consume, halt at each interval boundary,
// inject, resume over the extended context; stops at end of stream or when
// `max_tokens` have been emitted. Upstream failure yields state Failed with
// the partial transcript and all records preserved.
inline RunResult run_interleaved(const Context& context, const InterruptionPolicy& policy,
                                 UpstreamClient& upstream,
                                 TokenCount max_tokens = std::numeric_limits<TokenCount>::max(),
                                 const InterleaveCallbacks& callbacks = {},
                                 std::uint64_t id_start = 0) {
  validate_policy(policy);
  if (policy.targets.find(InjectionTarget::CoT) == policy.targets.end())
    throw PolicyError("policy does not target chain-of-thought injection");

  GenerationSession session(context, policy, id_start, max_tokens, callbacks);
  while (session.state() == SessionState::Generating) {
    std::unique_ptr<TokenStream> stream;
    try {
      stream = upstream.start(session.resume_context());
    } catch (const UpstreamError& e) {
      session.fail(e.what());
      break;
    }
    while (true) {
      std::optional<std::string> chunk;
      try {
        chunk = stream->next();
      } catch (const UpstreamError& e) {
        session.fail(e.what());
        break;
      }
      if (!chunk) {
        try {
          session.finish();
        } catch (const EncodingError& e) {
          session.fail(e.what());
        }
        break;
      }
      try {
        session.feed(*chunk);
      } catch (const EncodingError& e) {
        session.fail(e.what());
        break;
      }
      if (session.take_resume_request()) {
        stream->stop();
        break;
      }
      if (session.state() != SessionState::Generating) {
        stream->stop();
        break;
      }
    }
  }

  RunResult result;
  result.state = session.state();
  result.transcript = session.transcript();
  result.segments = session.segments();
  result.records = session.records();
  result.final_context = session.final_context();
  result.emitted_tokens = session.emitted_tokens();
  result.error = session.error();
  return result;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic pseudo-random word stream for desk-scale verification.
// Emits exactly `total_tokens` single-token chunks; the cursor lives on the
// client, so a new start() after a stop continues the sequence regardless
// of what was injected — which is what lets tests prove the interleaver
// neither drops nor duplicates tokens. refuse_after(n) makes the stream
// fail once n tokens have been emitted.
class MockUpstream : public UpstreamClient {
 public:
  MockUpstream(std::uint64_t seed, TokenCount total_tokens) : seed_(seed), total_(total_tokens) {}

  MockUpstream& refuse_after(TokenCount n) {
    refuse_after_ = n;
    return *this;
  }

  static std::string word(std::uint64_t seed, TokenCount index) {
    std::uint64_t r = detail::splitmix64(seed * 0x2545f4914f6cdd1dULL + index + 1);
    std::size_t len = 2 + std::size_t(r % 6);
    std::string w;
    w.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      r = detail::splitmix64(r);
      w.push_back(char('a' + int(r % 26)));
    }
    return w;
  }

  TokenCount cursor() const { return cursor_; }

  std::unique_ptr<TokenStream> start(const Context&) override {
    return std::make_unique<Stream>(*this);
  }

 private:
  class Stream : public TokenStream {
   public:
    explicit Stream(MockUpstream& owner) : owner_(owner) {}
    std::optional<std::string> next() override {
      if (owner_.refuse_after_ && owner_.cursor_ >= *owner_.refuse_after_)
        throw UpstreamError("mock upstream refused after " +
                            std::to_string(*owner_.refuse_after_) + " tokens");
      if (owner_.cursor_ >= owner_.total_) return std::nullopt;
      std::string w = word(owner_.seed_, owner_.cursor_);
      std::string chunk = owner_.cursor_ == 0 ? w : " " + w;
      ++owner_.cursor_;
      return chunk;
    }

   private:
    MockUpstream& owner_;
  };

  std::uint64_t seed_;
  TokenCount total_;
  TokenCount cursor_ = 0;
  std::optional<TokenCount> refuse_after_;
};

inline MockUpstream deterministic_mock_upstream(std::uint64_t seed, TokenCount total_tokens) {
  return MockUpstream(seed, total_tokens);
}

}  // namespace ric
