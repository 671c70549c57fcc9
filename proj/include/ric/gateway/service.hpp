#pragma once

// The operator-facing HTTP surface.
//
//   POST /v1/transform         apply the injection policy to a chat body;
//                              returns transformed messages, records, ratio
//   POST /v1/chat/completions  proxy mode: transform input, interleave the
//                              upstream CoT stream, emit SSE events
//                              (content / interruption / error / done)
//   GET  /metrics              plain-text counters
//   GET  /healthz
//
// Per-conversation carry state is serialized by conversation_id; audit
// writes are append-serialized; everything else is stateless per request.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ric/analytics.hpp"
#include "ric/context.hpp"
#include "ric/engine.hpp"
#include "ric/errors.hpp"
#include "ric/gateway/audit.hpp"
#include "ric/gateway/carry.hpp"
#include "ric/gateway/config.hpp"
#include "ric/gateway/metrics.hpp"
#include "ric/gateway/upstream_http.hpp"
#include "ric/gateway/wire.hpp"
#include "ric/interleave.hpp"
#include "ric/policy.hpp"

namespace ric::gateway {

// Collision error annotated with the offending message index for the
// 422-class response.
class SentinelCollisionAt : public SentinelCollisionError {
 public:
  SentinelCollisionAt(std::size_t index, const std::string& msg)
      : SentinelCollisionError(msg), message_index(index) {}
  std::size_t message_index;
};

using UpstreamFactory =
    std::function<std::unique_ptr<UpstreamClient>(const nlohmann::json& request_body)>;

// "mock:seed=7,total=2500[,refuse_after=N]" or "http://host:port".
inline UpstreamFactory make_upstream_factory(const std::string& spec) {
  if (spec.empty()) return nullptr;
  if (spec.rfind("mock:", 0) == 0) {
    std::uint64_t seed = 1;
    TokenCount total = 1000;
    std::optional<TokenCount> refuse;
    std::string params = spec.substr(5);
    std::size_t pos = 0;
    while (pos < params.size()) {
      std::size_t comma = params.find(',', pos);
      if (comma == std::string::npos) comma = params.size();
      std::string kv = params.substr(pos, comma - pos);
      pos = comma + 1;
      if (kv.empty()) continue;
      std::size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw PolicyError("mock upstream parameter '" + kv + "' needs key=value");
      std::string key = kv.substr(0, eq);
      std::uint64_t value = detail::parse_u64("upstream." + key, kv.substr(eq + 1));
      if (key == "seed")
        seed = value;
      else if (key == "total")
        total = value;
      else if (key == "refuse_after")
        refuse = value;
      else
        throw PolicyError("unknown mock upstream parameter '" + key + "'");
    }
    return [seed, total, refuse](const nlohmann::json&) {
      auto mock = std::make_unique<MockUpstream>(seed, total);
      if (refuse) mock->refuse_after(*refuse);
      return mock;
    };
  }
  if (spec.rfind("http://", 0) == 0) {
    return [spec](const nlohmann::json& body) {
      return std::make_unique<HttpUpstreamClient>(spec, body);
    };
  }
  if (spec.rfind("https://", 0) == 0)
    throw PolicyError("https upstreams need a TLS-enabled build; use http:// or mock:");
  throw PolicyError("unknown upstream '" + spec + "' (expected mock:... or http://...)");
}

class Gateway {
 public:
  explicit Gateway(GatewayConfig config)
      : Gateway(std::move(config), UpstreamFactory{}) {
    upstream_factory_ = make_upstream_factory(config_.upstream);
  }

  Gateway(GatewayConfig config, UpstreamFactory upstream_factory)
      : config_(std::move(config)),
        upstream_factory_(std::move(upstream_factory)),
        audit_(config_.audit_log_path),
        carries_(config_.carry_ttl_seconds) {
    validate_policy(config_.policy);
    register_routes();
  }

  struct Reply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
  };

  Metrics& metrics() { return metrics_; }
  AuditLog& audit_log() { return audit_; }
  const GatewayConfig& config() const { return config_; }
  httplib::Server& server() { return server_; }

  int bind_any_port() { return server_.bind_to_any_port(config_.listen_host); }
  bool serve_bound() { return server_.listen_after_bind(); }
  bool listen() { return server_.listen(config_.listen_host, config_.listen_port); }
  void stop() { server_.stop(); }
  bool is_running() const { return server_.is_running(); }

  // Transform-only entry point, usable without HTTP.
  Reply handle_transform(const std::string& raw_body, const std::string& conv_header = "") {
    metrics_.requests_total++;
    metrics_.transform_requests++;

    ChatRequest req;
    try {
      req = parse_chat_request(raw_body, config_.max_body_bytes);
    } catch (const AntiSpoofError& e) {
      metrics_.rejected_requests++;
      return Reply{400, "application/json", error_json("anti_spoofing", e.what()).dump()};
    } catch (const BadRequestError& e) {
      metrics_.rejected_requests++;
      return Reply{400, "application/json", error_json("bad_request", e.what()).dump()};
    }
    if (req.conversation_id.empty()) req.conversation_id = conv_header;
    if (total_length(req.context) == 0) {
      metrics_.rejected_requests++;
      return Reply{400, "application/json",
                   error_json("bad_request", "context has zero tokens").dump()};
    }

    std::optional<CarryStore::Lease> lease;
    if (!req.conversation_id.empty()) lease.emplace(carries_.acquire(req.conversation_id));
    TokenCount carry = lease ? lease->carry() : 0;
    std::uint64_t id_start = lease ? lease->next_id() : 0;

    TransformOutcome outcome;
    try {
      outcome = apply_input_policy(req.context, carry, id_start);
    } catch (const SentinelCollisionAt& e) {
      metrics_.sentinel_collisions++;
      metrics_.rejected_requests++;
      nlohmann::json err = error_json("sentinel_collision", e.what());
      err["error"]["message_index"] = e.message_index;
      return Reply{422, "application/json", err.dump()};
    }
    if (lease) lease->update(outcome.carry, id_start + outcome.records.size());

    const std::string conv = req.conversation_id.empty() ? "-" : req.conversation_id;
    for (std::size_t k = 0; k < outcome.records.size(); ++k)
      audit_record(conv, outcome.records[k], outcome.record_ratio_after[k]);

    RatioReport report = build_report(outcome.context, outcome.inline_injected);
    metrics_.observe_ratio(report.measured_ratio);

    nlohmann::json res;
    if (!req.model.empty()) res["model"] = req.model;
    if (!req.conversation_id.empty()) res["conversation_id"] = req.conversation_id;
    res["messages"] = messages_json(outcome.context);
    res["records"] = records_json(outcome);
    res["ratio"] = ratio_json(report);
    return Reply{200, "application/json", res.dump()};
  }

 private:
  struct TransformOutcome {
    Context context;
    std::vector<InterruptionRecord> records;
    std::vector<std::size_t> record_message_index;
    std::vector<Rational> record_ratio_after;
    TokenCount inline_injected = 0;
    TokenCount carry = 0;
  };

  // Applies the input-side policy (inline or turn-level) when UserInput is
  // targeted; otherwise passes the context through unchanged.
  TransformOutcome apply_input_policy(const Context& ctx, TokenCount carry,
                                      std::uint64_t id_start) {
    const InterruptionPolicy& policy = config_.policy;
    TransformOutcome out;
    out.carry = carry;
    if (policy.targets.find(InjectionTarget::UserInput) == policy.targets.end()) {
      out.context = ctx;
      return out;
    }

    if (policy.mode == InjectionMode::Inline) {
      const Message* sys = ctx.system_prompt();
      TokenCount s_p = sys ? sys->token_len : 0;
      TokenCount externals_before = 0;
      TokenCount injected_so_far = 0;
      std::size_t index = 0;
      for (const auto& m : ctx.messages()) {
        if (m.role == Role::User) {
          InlineInjection inj;
          try {
            inj = inject_inline(m, policy, id_start + out.records.size(),
                                SelectionFeatures{externals_before, index, {}});
          } catch (const SentinelCollisionError& e) {
            throw SentinelCollisionAt(index, e.what());
          }
          for (const auto& rec : inj.records) {
            TokenCount block =
                count_tokens(render_block(policy, rec.id, rec.offset_tokens, rec.text));
            injected_so_far += block;
            // Share of the context prefix at this injection point.
            TokenCount s_num = s_p + injected_so_far;
            TokenCount l_den = externals_before + rec.offset_tokens + injected_so_far;
            out.record_ratio_after.push_back(Rational(Int128(s_num), Int128(l_den)));
            out.record_message_index.push_back(index);
            out.records.push_back(rec);
          }
          out.inline_injected += inj.injected_tokens;
          out.context.add(std::move(inj.message));
        } else {
          out.context.add(m);
        }
        externals_before += m.token_len;
        ++index;
      }
      return out;
    }

    // Turn-level mode.
    TurnInjection turns = inject_turns(ctx, policy, carry, id_start);
    out.carry = turns.carry;
    out.records = std::move(turns.records);
    out.context = std::move(turns.context);
    TokenCount s_run = 0;
    TokenCount l_run = 0;
    std::size_t index = 0;
    for (const auto& m : out.context.messages()) {
      l_run += m.token_len;
      if (m.role == Role::SystemPrompt || m.provenance == Provenance::Injected)
        s_run += m.token_len;
      if (m.role == Role::Interruption) {
        out.record_message_index.push_back(index);
        out.record_ratio_after.push_back(Rational(Int128(s_run), Int128(l_run)));
      }
      ++index;
    }
    return out;
  }

  // Measured share over the transformed context, with inline-injected mass
  // (which lives inside user messages) attributed to the system side. The
  // analytic companion uses the policy's nominal interruption length.
  RatioReport build_report(const Context& ctx, TokenCount inline_injected) const {
    RatioReport report;
    TokenCount injected_mass = inline_injected;
    for (const auto& m : ctx.messages()) {
      report.l_tokens += m.token_len;
      if (m.role == Role::SystemPrompt || m.provenance == Provenance::Injected)
        report.s_tokens += m.token_len;
      if (m.provenance == Provenance::Injected) injected_mass += m.token_len;
    }
    report.s_tokens += inline_injected;
    report.measured_ratio =
        Rational(Int128(report.s_tokens), Int128(report.l_tokens ? report.l_tokens : 1));
    TokenCount l_organic = report.l_tokens - injected_mass;
    if (l_organic > 0) {
      const Message* sys = ctx.system_prompt();
      RatioParams params(sys ? sys->token_len : 0,
                         count_tokens(config_.policy.default_text),
                         config_.policy.interval_tokens);
      report.analytic_ratio = analytic_ratio(params, l_organic);
      report.bound_q = asymptotic_ratio(params) / Rational(2);
    }
    return report;
  }

  nlohmann::json records_json(const TransformOutcome& outcome) const {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t k = 0; k < outcome.records.size(); ++k)
      arr.push_back(record_json(outcome.records[k], outcome.record_message_index[k],
                                fnv1a64_hex(outcome.records[k].text)));
    return arr;
  }

  void audit_record(const std::string& conv, const InterruptionRecord& rec,
                    const Rational& ratio_after) {
    AuditEntry entry;
    entry.ts_ms = now_unix_ms();
    entry.conv = conv;
    entry.id = rec.id;
    entry.off = rec.offset_tokens;
    entry.digest = fnv1a64_hex(rec.text);
    entry.mode = rec.mode;
    entry.ratio = ratio_after;
    audit_.append(entry);
    metrics_.audit_entries++;
    switch (rec.mode) {
      case RecordMode::Inline: metrics_.injections_inline++; break;
      case RecordMode::TurnLevel: metrics_.injections_turn_level++; break;
      case RecordMode::CoT: metrics_.injections_cot++; break;
    }
  }

  // ----- proxy mode ---------------------------------------------------

  struct StreamState {
    ChatRequest request;
    std::optional<CarryStore::Lease> lease;
    std::string conv;
    TransformOutcome input;
    std::uint64_t next_id = 0;
    TokenCount max_tokens = 0;
    bool want_cot = false;
    std::unique_ptr<UpstreamClient> upstream;
  };

  void handle_chat(const httplib::Request& hreq, httplib::Response& res) {
    metrics_.requests_total++;
    metrics_.proxy_requests++;
    if (!upstream_factory_) {
      res.status = 503;
      res.set_content(
          error_json("no_upstream", "gateway is transform-only; no upstream configured").dump(),
          "application/json");
      return;
    }

    auto state = std::make_shared<StreamState>();
    try {
      state->request = parse_chat_request(hreq.body, config_.max_body_bytes);
    } catch (const AntiSpoofError& e) {
      metrics_.rejected_requests++;
      res.status = 400;
      res.set_content(error_json("anti_spoofing", e.what()).dump(), "application/json");
      return;
    } catch (const BadRequestError& e) {
      metrics_.rejected_requests++;
      res.status = 400;
      res.set_content(error_json("bad_request", e.what()).dump(), "application/json");
      return;
    }
    if (state->request.conversation_id.empty())
      state->request.conversation_id = hreq.get_header_value("X-Conversation-Id");
    state->conv = state->request.conversation_id.empty() ? "-" : state->request.conversation_id;

    if (!state->request.conversation_id.empty())
      state->lease.emplace(carries_.acquire(state->request.conversation_id));
    TokenCount carry = state->lease ? state->lease->carry() : 0;
    std::uint64_t id_start = state->lease ? state->lease->next_id() : 0;

    try {
      state->input = apply_input_policy(state->request.context, carry, id_start);
    } catch (const SentinelCollisionAt& e) {
      metrics_.sentinel_collisions++;
      metrics_.rejected_requests++;
      nlohmann::json err = error_json("sentinel_collision", e.what());
      err["error"]["message_index"] = e.message_index;
      res.status = 422;
      res.set_content(err.dump(), "application/json");
      return;
    }
    state->next_id = id_start + state->input.records.size();
    if (state->lease) state->lease->update(state->input.carry, state->next_id);
    for (std::size_t k = 0; k < state->input.records.size(); ++k)
      audit_record(state->conv, state->input.records[k], state->input.record_ratio_after[k]);

    state->want_cot =
        config_.policy.targets.find(InjectionTarget::CoT) != config_.policy.targets.end();
    state->max_tokens =
        state->request.max_tokens.value_or(std::numeric_limits<TokenCount>::max());
    state->upstream = upstream_factory_(state->request.body);

    if (state->request.stream) {
      res.set_header("Cache-Control", "no-store");
      res.set_chunked_content_provider(
          "text/event-stream", [this, state](std::size_t offset, httplib::DataSink& sink) {
            if (offset != 0) return false;
            run_stream(*state, sink);
            sink.done();
            return true;
          });
      return;
    }

    // Non-streaming proxy: run to completion and answer with one body.
    RunResult result = run_generation(*state, nullptr);
    if (result.state == SessionState::Failed) {
      metrics_.upstream_failures++;
      nlohmann::json err = error_json("upstream_failure", result.error);
      err["error"]["partial_tokens"] = result.emitted_tokens;
      err["error"]["records"] = result.records.size();
      res.status = 502;
      res.set_content(err.dump(), "application/json");
      return;
    }
    RatioReport report = build_report(result.final_context, state->input.inline_injected);
    metrics_.observe_ratio(report.measured_ratio);
    nlohmann::json body;
    if (!state->request.model.empty()) body["model"] = state->request.model;
    body["choices"] = nlohmann::json::array(
        {{{"index", 0},
          {"message", {{"role", "assistant"}, {"content", result.transcript}}},
          {"finish_reason",
           result.emitted_tokens >= state->max_tokens ? "length" : "stop"}}});
    nlohmann::json recs = nlohmann::json::array();
    std::size_t base_size = state->input.context.size();
    for (std::size_t k = 0; k < result.records.size(); ++k)
      recs.push_back(record_json(result.records[k], base_size + 2 * k + 1,
                                 fnv1a64_hex(result.records[k].text)));
    body["records"] = recs;
    body["ratio"] = ratio_json(report);
    res.set_content(body.dump(), "application/json");
  }

  // Drives generation for proxy requests. When `sink` is non-null, events
  // stream as they happen; injected reminders are distinct annotated
  // events, never merged into model text.
  RunResult run_generation(StreamState& state, httplib::DataSink* sink) {
    auto write = [&](const std::string& payload) {
      if (sink) sink->write(payload.data(), payload.size());
    };

    if (!state.want_cot) {
      // Pass the stream through, still budgeted, with no CoT injection.
      // The cap is per whole chunks here; only the interleaver cuts at
      // exact token boundaries.
      RunResult result;
      result.final_context = state.input.context;
      ric::detail::TokenScanner scanner(0);
      auto stream = state.upstream->start(state.input.context);
      try {
        while (state.max_tokens > 0) {
          auto chunk = stream->next();
          if (!chunk) break;
          result.transcript += *chunk;
          scanner.scan(result.transcript, false);
          write(sse_event("content", {{"text", *chunk}}));
          if (scanner.tokens_started() >= state.max_tokens) {
            stream->stop();
            break;
          }
        }
        result.state = SessionState::Done;
        if (!result.transcript.empty())
          result.final_context.add(Message::make(Role::Assistant, result.transcript));
      } catch (const Error& e) {
        result.state = SessionState::Failed;
        result.error = e.what();
      }
      result.emitted_tokens = scanner.tokens_started();
      return result;
    }

    const Message* sys = state.request.context.system_prompt();
    TokenCount s_p = sys ? sys->token_len : 0;
    TokenCount externals = external_length(state.request.context);
    TokenCount input_injected = 0;
    for (const auto& m : state.input.context.messages())
      if (m.provenance == Provenance::Injected) input_injected += m.token_len;
    input_injected += state.input.inline_injected;

    TokenCount cot_injected = 0;
    std::size_t base_size = state.input.context.size();
    std::size_t cot_index = 0;

    InterleaveCallbacks callbacks;
    callbacks.on_segment = [&](std::string_view segment) {
      write(sse_event("content", {{"text", std::string(segment)}}));
    };
    callbacks.on_interruption = [&](const InterruptionRecord& rec) {
      TokenCount block = count_tokens(
          render_block(config_.policy, rec.id, rec.offset_tokens, rec.text));
      cot_injected += block;
      // Prefix share: everything injected so far over the context consumed
      // up to this point of the emission (externals already include s_p).
      Rational ratio(
          Int128(s_p + input_injected + cot_injected),
          Int128(externals + input_injected + cot_injected + rec.offset_tokens));
      audit_record(state.conv, rec, ratio);
      if (state.lease) state.lease->update(state.input.carry, rec.id + 1);
      nlohmann::json ev =
          record_json(rec, base_size + 2 * cot_index + 1, fnv1a64_hex(rec.text));
      write(sse_event("interruption", ev));
      ++cot_index;
    };

    RunResult result = run_interleaved(state.input.context, config_.policy, *state.upstream,
                                       state.max_tokens, callbacks, state.next_id);
    return result;
  }

  void run_stream(StreamState& state, httplib::DataSink& sink) {
    RunResult result = run_generation(state, &sink);
    auto write = [&](const std::string& payload) {
      sink.write(payload.data(), payload.size());
    };
    if (result.state == SessionState::Failed) {
      metrics_.upstream_failures++;
      nlohmann::json err;
      err["message"] = result.error;
      err["partial_tokens"] = result.emitted_tokens;
      err["records"] = result.records.size();
      write(sse_event("error", err));
      return;
    }
    RatioReport report = build_report(result.final_context, state.input.inline_injected);
    metrics_.observe_ratio(report.measured_ratio);
    nlohmann::json done;
    done["records"] = result.records.size() + state.input.records.size();
    done["emitted_tokens"] = result.emitted_tokens;
    done["ratio"] = ratio_json(report);
    write(sse_event("done", done));
  }

  void register_routes() {
    server_.set_payload_max_length(config_.max_body_bytes);

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok\n", "text/plain");
    });

    server_.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(metrics_.render(), "text/plain");
    });

    server_.Post("/v1/transform", [this](const httplib::Request& hreq, httplib::Response& res) {
      Reply reply = handle_transform(hreq.body, hreq.get_header_value("X-Conversation-Id"));
      res.status = reply.status;
      res.set_content(reply.body, reply.content_type);
    });

    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& hreq, httplib::Response& res) {
                   handle_chat(hreq, res);
                 });
  }

  GatewayConfig config_;
  UpstreamFactory upstream_factory_;
  Metrics metrics_;
  AuditLog audit_;
  CarryStore carries_;
  httplib::Server server_;
};

}  // namespace ric::gateway
