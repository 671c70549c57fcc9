#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "oracle.hpp"
#include "ric/analytics.hpp"
#include "ric/gateway/service.hpp"

using namespace ric;
using namespace ric::gateway;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& tag) {
  return "/tmp/ric_test_" + tag + "_" + std::to_string(::getpid()) + ".ndjson";
}

json user_body(const std::string& content) {
  return json{{"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

struct SseEvent {
  std::string name;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& body) {
  std::vector<SseEvent> events;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t end = body.find("\n\n", pos);
    if (end == std::string::npos) break;
    std::string block = body.substr(pos, end - pos);
    pos = end + 2;
    SseEvent ev;
    std::size_t line_start = 0;
    while (line_start <= block.size()) {
      std::size_t eol = block.find('\n', line_start);
      if (eol == std::string::npos) eol = block.size();
      std::string line = block.substr(line_start, eol - line_start);
      line_start = eol + 1;
      if (line.rfind("event: ", 0) == 0) ev.name = line.substr(7);
      if (line.rfind("data: ", 0) == 0) ev.data = json::parse(line.substr(6));
    }
    if (!ev.name.empty()) events.push_back(std::move(ev));
  }
  return events;
}

struct LiveGateway {
  explicit LiveGateway(Gateway& gw) : gateway(gw) {
    port = gateway.bind_any_port();
    REQUIRE(port > 0);
    thread = std::thread([this] { gateway.serve_bound(); });
    while (!gateway.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  ~LiveGateway() {
    gateway.stop();
    thread.join();
  }
  Gateway& gateway;
  int port = 0;
  std::thread thread;
};

GatewayConfig inline_config(TokenCount t) {
  GatewayConfig cfg;
  cfg.policy.interval_tokens = t;
  cfg.policy.mode = InjectionMode::Inline;
  cfg.policy.targets = {InjectionTarget::UserInput};
  return cfg;
}

GatewayConfig turn_config(TokenCount t) {
  GatewayConfig cfg;
  cfg.policy.interval_tokens = t;
  cfg.policy.mode = InjectionMode::TurnLevel;
  cfg.policy.targets = {InjectionTarget::UserInput};
  return cfg;
}

GatewayConfig cot_config(TokenCount t) {
  GatewayConfig cfg;
  cfg.policy.interval_tokens = t;
  cfg.policy.mode = InjectionMode::TurnLevel;
  cfg.policy.targets = {InjectionTarget::CoT};
  return cfg;
}

}  // namespace

TEST_CASE("transform: short request passes through untouched") {
  Gateway gw(inline_config(1000), UpstreamFactory{});
  auto reply = gw.handle_transform(user_body(synthetic_token_text(10)).dump());
  REQUIRE(reply.status == 200);
  auto res = json::parse(reply.body);
  CHECK(res["records"].empty());
  CHECK(res["messages"].size() == 1);
  CHECK(res["messages"][0]["content"] == synthetic_token_text(10));
  CHECK(res["ratio"]["s_tokens"] == 0);
  CHECK(res["ratio"]["l_tokens"] == 10);
}

TEST_CASE("transform: inline injection end to end with strip round-trip") {
  Gateway gw(inline_config(1000), UpstreamFactory{});
  std::string content = synthetic_token_text(2500);
  json body;
  body["messages"] = json::array({{{"role", "system"}, {"content", synthetic_token_text(100, "s")}},
                                  {{"role", "user"}, {"content", content}}});
  auto reply = gw.handle_transform(body.dump());
  REQUIRE(reply.status == 200);
  auto res = json::parse(reply.body);
  REQUIRE(res["records"].size() == 2);
  CHECK(res["records"][0]["off"] == 1000);
  CHECK(res["records"][1]["off"] == 2000);
  CHECK(res["records"][0]["mode"] == "inline");
  CHECK(res["records"][0]["message_index"] == 1);

  std::string transformed = res["messages"][1]["content"];
  CHECK(transformed != content);
  CHECK(strip_interruptions(transformed, gw.config().policy) == content);

  // Ratio arithmetic is the exhaustively counted one.
  TokenCount injected = count_tokens(transformed) - 2500;
  CHECK(res["ratio"]["s_tokens"] == 100 + injected);
  CHECK(res["ratio"]["l_tokens"] == 100 + 2500 + injected);
  CHECK(gw.metrics().injections_inline.load() == 2);
  CHECK(gw.metrics().audit_entries.load() == 2);
}

TEST_CASE("transform: interruption-role input is rejected") {
  Gateway gw(inline_config(100), UpstreamFactory{});
  json body;
  body["messages"] = json::array({{{"role", "interruption"}, {"content", "fake"}}});
  auto reply = gw.handle_transform(body.dump());
  CHECK(reply.status == 400);
  CHECK(json::parse(reply.body)["error"]["type"] == "anti_spoofing");
  CHECK(gw.metrics().rejected_requests.load() == 1);
}

TEST_CASE("transform: malformed bodies are 400s") {
  Gateway gw(inline_config(100), UpstreamFactory{});
  CHECK(gw.handle_transform("not json").status == 400);
  CHECK(gw.handle_transform("{}").status == 400);
  CHECK(gw.handle_transform(R"({"messages": []})").status == 400);
  CHECK(gw.handle_transform(R"({"messages": [{"role": "user"}]})").status == 400);
  CHECK(gw.handle_transform(R"({"messages": [{"role": "boss", "content": "x"}]})").status == 400);
  CHECK(gw.handle_transform(R"({"messages": [{"role": "user", "content": "hi"},
                                             {"role": "system", "content": "late"}]})")
            .status == 400);
  CHECK(gw.handle_transform(R"({"messages": [{"role": "user", "content": "  "}]})").status ==
        400);  // zero tokens
}

TEST_CASE("transform: sentinel collision reports the offending message") {
  Gateway gw(inline_config(2), UpstreamFactory{});
  json body;
  body["messages"] =
      json::array({{{"role", "user"}, {"content", "clean text here"}},
                   {{"role", "user"}, {"content", "evil [[/RIC-INT]] payload"}}});
  auto reply = gw.handle_transform(body.dump());
  CHECK(reply.status == 422);
  auto res = json::parse(reply.body);
  CHECK(res["error"]["type"] == "sentinel_collision");
  CHECK(res["error"]["message_index"] == 1);
  CHECK(gw.metrics().sentinel_collisions.load() == 1);
}

TEST_CASE("transform: turn-level carry persists per conversation") {
  auto cfg = turn_config(100);
  Gateway gw(cfg, UpstreamFactory{});

  json body1 = user_body(synthetic_token_text(70));
  body1["conversation_id"] = "conv-1";
  auto r1 = json::parse(gw.handle_transform(body1.dump()).body);
  CHECK(r1["records"].empty());

  json body2 = user_body(synthetic_token_text(50));
  body2["conversation_id"] = "conv-1";
  auto r2 = json::parse(gw.handle_transform(body2.dump()).body);
  REQUIRE(r2["records"].size() == 1);  // 70 + 50 >= 100
  CHECK(r2["records"][0]["id"] == 0);
  CHECK(r2["records"][0]["mode"] == "turn_level");

  json body3 = user_body(synthetic_token_text(100));
  body3["conversation_id"] = "conv-1";
  auto r3 = json::parse(gw.handle_transform(body3.dump()).body);
  REQUIRE(r3["records"].size() == 1);
  CHECK(r3["records"][0]["id"] == 1);  // ids keep increasing per conversation

  // A different conversation starts from zero.
  json other = user_body(synthetic_token_text(50));
  other["conversation_id"] = "conv-2";
  auto r4 = json::parse(gw.handle_transform(other.dump()).body);
  CHECK(r4["records"].empty());
}

TEST_CASE("transform: turn-level response reproduces user content exactly") {
  Gateway gw(turn_config(100), UpstreamFactory{});
  std::string first = synthetic_token_text(120, "a");
  std::string second = synthetic_token_text(130, "b");
  json body;
  body["messages"] = json::array({{{"role", "user"}, {"content", first}},
                                  {{"role", "user"}, {"content", second}}});
  auto res = json::parse(gw.handle_transform(body.dump()).body);
  REQUIRE(res["records"].size() == 2);

  // Injected turns are exactly the sentinel-wrapped messages; everything
  // else is the original bytes.
  std::vector<std::string> organic;
  for (const auto& m : res["messages"]) {
    std::string content = m["content"];
    if (is_sentinel_wrapped(content, gw.config().policy)) continue;
    organic.push_back(content);
  }
  REQUIRE(organic.size() == 2);
  CHECK(organic[0] == first);
  CHECK(organic[1] == second);
}

TEST_CASE("transform: carry replay oracle over a request sequence") {
  std::mt19937_64 rng(88);
  for (int round = 0; round < 10; ++round) {
    TokenCount t = 20 + rng() % 80;
    auto cfg = turn_config(t);
    Gateway gw(cfg, UpstreamFactory{});
    std::string conv = "replay";
    TokenCount total = 0;
    std::uint64_t injections = 0;
    for (int i = 0; i < 12; ++i) {
      TokenCount n = 1 + rng() % 120;
      total += n;
      json body = user_body(synthetic_token_text(n));
      body["conversation_id"] = conv;
      auto res = json::parse(gw.handle_transform(body.dump()).body);
      injections += res["records"].size();
      // Prefix invariant: injections == floor((total-1)/t) within 1.
      std::uint64_t expected = (total - 1) / t;
      CAPTURE(total);
      CAPTURE(t);
      CHECK(injections <= expected + 1);
      CHECK(injections + 1 >= expected);
    }
    CHECK(injections == total / t);  // drain semantics, exact
  }
}

TEST_CASE("audit log: NDJSON lines with the exact field names") {
  std::string path = temp_path("audit");
  std::remove(path.c_str());
  {
    auto cfg = inline_config(10);
    cfg.audit_log_path = path;
    Gateway gw(cfg, UpstreamFactory{});
    json body = user_body(synthetic_token_text(35));
    body["conversation_id"] = "audited";
    auto reply = gw.handle_transform(body.dump());
    REQUIRE(reply.status == 200);
    REQUIRE(json::parse(reply.body)["records"].size() == 3);
    CHECK(gw.audit_log().entries() == 3);
  }
  std::ifstream in(path);
  REQUIRE(in.is_open());
  std::string line;
  std::vector<json> lines;
  while (std::getline(in, line)) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 3);
  std::uint64_t prev_id = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& j = lines[i];
    REQUIRE(j.size() == 7);
    CHECK(j.contains("ts"));
    CHECK(j.contains("conv"));
    CHECK(j.contains("id"));
    CHECK(j.contains("off"));
    CHECK(j.contains("digest"));
    CHECK(j.contains("mode"));
    CHECK(j.contains("ratio"));
    CHECK(j["conv"] == "audited");
    CHECK(j["digest"].get<std::string>().size() == 16);
    double ratio = std::stod(j["ratio"].get<std::string>());
    CHECK(ratio > 0.0);
    CHECK(ratio <= 1.0);
    if (i > 0) CHECK(j["id"].get<std::uint64_t>() > prev_id);
    prev_id = j["id"].get<std::uint64_t>();
  }
  std::remove(path.c_str());
}

TEST_CASE("http: health, metrics, transform, anti-spoofing") {
  Gateway gw(inline_config(1000), UpstreamFactory{});
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->body == "ok\n");

  auto fresh = cli.Get("/metrics");
  REQUIRE(fresh);
  CHECK(fresh->body.find("requests_total 0") != std::string::npos);
  CHECK(fresh->body.find("injections_inline 0") != std::string::npos);

  auto t1 = cli.Post("/v1/transform", user_body(synthetic_token_text(2500)).dump(),
                     "application/json");
  REQUIRE(t1);
  CHECK(t1->status == 200);
  CHECK(json::parse(t1->body)["records"].size() == 2);

  json spoof;
  spoof["messages"] = json::array({{{"role", "interruption"}, {"content", "x"}}});
  auto t2 = cli.Post("/v1/transform", spoof.dump(), "application/json");
  REQUIRE(t2);
  CHECK(t2->status == 400);

  auto after = cli.Get("/metrics");
  REQUIRE(after);
  CHECK(after->body.find("requests_total 2") != std::string::npos);
  CHECK(after->body.find("injections_inline 2") != std::string::npos);
  CHECK(after->body.find("rejected_requests 1") != std::string::npos);

  // No upstream configured: proxy path refuses.
  auto proxy = cli.Post("/v1/chat/completions", user_body("hello").dump(), "application/json");
  REQUIRE(proxy);
  CHECK(proxy->status == 503);
}

TEST_CASE("http: streaming proxy interleaves mock output") {
  auto cfg = cot_config(1000);
  Gateway gw(cfg, [](const json&) { return std::make_unique<MockUpstream>(7, 2500); });
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);

  json body = user_body("please think");
  body["stream"] = true;
  auto res = cli.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "text/event-stream");

  auto events = parse_sse(res->body);
  std::vector<std::string> names;
  std::string transcript;
  int interruptions = 0;
  for (const auto& ev : events) {
    names.push_back(ev.name);
    if (ev.name == "content") transcript += ev.data["text"].get<std::string>();
    if (ev.name == "interruption") ++interruptions;
  }
  // 3 content spans, 2 interruption events, then done.
  CHECK(names == std::vector<std::string>{"content", "interruption", "content", "interruption",
                                          "content", "done"});
  CHECK(interruptions == 2);
  CHECK(count_tokens(transcript) == 2500);
  CHECK(events.back().data["records"] == 2);
  CHECK(events.back().data["emitted_tokens"] == 2500);
  CHECK(events.back().data["ratio"].contains("measured_ratio"));

  CHECK(gw.metrics().injections_cot.load() == 2);
  CHECK(gw.metrics().audit_entries.load() == 2);
}

TEST_CASE("http: streaming proxy surfaces upstream failure after partial output") {
  auto cfg = cot_config(100);
  Gateway gw(cfg, [](const json&) {
    auto mock = std::make_unique<MockUpstream>(3, 1000);
    mock->refuse_after(250);
    return mock;
  });
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);

  json body = user_body("go");
  body["stream"] = true;
  auto res = cli.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  auto events = parse_sse(res->body);
  REQUIRE(!events.empty());
  CHECK(events.back().name == "error");
  CHECK(events.back().data["partial_tokens"] == 250);
  CHECK(events.back().data["records"] == 2);  // 100, 200 fired before the failure
  CHECK(gw.metrics().upstream_failures.load() == 1);
  CHECK(gw.metrics().injections_cot.load() == 2);
  CHECK(gw.metrics().audit_entries.load() == 2);
}

TEST_CASE("http: zero max_tokens yields an empty stream") {
  auto cfg = cot_config(100);
  Gateway gw(cfg, [](const json&) { return std::make_unique<MockUpstream>(3, 1000); });
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);

  json body = user_body("go");
  body["stream"] = true;
  body["max_tokens"] = 0;
  auto res = cli.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  auto events = parse_sse(res->body);
  REQUIRE(events.size() == 1);
  CHECK(events[0].name == "done");
  CHECK(events[0].data["emitted_tokens"] == 0);
  CHECK(events[0].data["records"] == 0);
}

TEST_CASE("http: non-streaming proxy aggregates the run") {
  auto cfg = cot_config(1000);
  Gateway gw(cfg, [](const json&) { return std::make_unique<MockUpstream>(7, 2500); });
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);

  auto res = cli.Post("/v1/chat/completions", user_body("question").dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto j = json::parse(res->body);
  CHECK(count_tokens(j["choices"][0]["message"]["content"].get<std::string>()) == 2500);
  CHECK(j["records"].size() == 2);
  CHECK(j["choices"][0]["finish_reason"] == "stop");
}

TEST_CASE("http: proxying a real streaming endpoint over the SSE wire") {
  // A bare upstream server speaking the SSE wire. It honors the resumption
  // contract by continuing the word stream from however many assistant
  // tokens the posted context already carries.
  const std::uint64_t seed = 7;
  const TokenCount total = 2500;
  httplib::Server upstream_srv;
  std::atomic<int> passthrough_seen{0};
  upstream_srv.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
    auto body = json::parse(req.body);
    // Unknown request fields travel to the upstream untouched.
    if (body.contains("temperature") && body["temperature"] == 0.25) ++passthrough_seen;
    TokenCount pos = 0;
    for (const auto& m : body["messages"])
      if (m["role"] == "assistant") pos += count_tokens(m["content"].get<std::string>());
    res.set_chunked_content_provider(
        "text/event-stream", [pos](std::size_t offset, httplib::DataSink& sink) {
          if (offset != 0) return false;
          for (TokenCount i = pos; i < total; ++i) {
            std::string chunk =
                (i == 0 ? "" : " ") + MockUpstream::word(seed, i);
            std::string ev = sse_event("content", {{"text", chunk}});
            sink.write(ev.data(), ev.size());
          }
          std::string done = sse_event("done", {{"records", 0}});
          sink.write(done.data(), done.size());
          sink.done();
          return true;
        });
  });
  int upstream_port = upstream_srv.bind_to_any_port("127.0.0.1");
  REQUIRE(upstream_port > 0);
  std::thread upstream_thread([&] { upstream_srv.listen_after_bind(); });
  while (!upstream_srv.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

  auto cfg = cot_config(400);
  cfg.upstream = "http://127.0.0.1:" + std::to_string(upstream_port);
  Gateway gw(cfg);
  LiveGateway live(gw);

  httplib::Client cli("127.0.0.1", live.port);
  cli.set_read_timeout(30, 0);
  json body = user_body("chain");
  body["stream"] = true;
  body["temperature"] = 0.25;
  auto res = cli.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  auto events = parse_sse(res->body);
  std::string transcript;
  for (const auto& ev : events)
    if (ev.name == "content") transcript += ev.data["text"].get<std::string>();
  CHECK(events.back().name == "done");
  // Re-sliced at the gateway's own interval, nothing lost across resumes.
  CHECK(count_tokens(transcript) == total);
  CHECK(transcript == [&] {
    std::string full;
    for (TokenCount i = 0; i < total; ++i) {
      if (i) full += ' ';
      full += MockUpstream::word(seed, i);
    }
    return full;
  }());
  CHECK(events.back().data["records"] == 6);  // floor(2499/400)
  CHECK(passthrough_seen.load() > 0);

  upstream_srv.stop();
  upstream_thread.join();
}

TEST_CASE("http: oversized bodies are refused") {
  auto cfg = inline_config(10);
  cfg.max_body_bytes = 1024;
  Gateway gw(cfg, UpstreamFactory{});
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);
  auto res = cli.Post("/v1/transform", user_body(std::string(4096, 'a')).dump(),
                      "application/json");
  REQUIRE(res);
  CHECK(res->status == 413);
}

TEST_CASE("http: concurrent requests for one conversation serialize correctly") {
  auto cfg = turn_config(100);
  Gateway gw(cfg, UpstreamFactory{});
  LiveGateway live(gw);

  const int threads = 4;
  const int per_thread = 10;
  const TokenCount tokens_each = 37;
  std::vector<std::thread> workers;
  std::atomic<std::uint64_t> injections{0};
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      httplib::Client cli("127.0.0.1", live.port);
      for (int i = 0; i < per_thread; ++i) {
        json body = user_body(synthetic_token_text(tokens_each));
        body["conversation_id"] = "shared";
        auto res = cli.Post("/v1/transform", body.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        injections += json::parse(res->body)["records"].size();
      }
    });
  }
  for (auto& w : workers) w.join();

  TokenCount total = TokenCount(threads) * per_thread * tokens_each;
  CHECK(injections.load() == total / 100);  // drained exactly, no lost carry
  CHECK(gw.metrics().injections_turn_level.load() == injections.load());
  CHECK(gw.metrics().audit_entries.load() == injections.load());
}

TEST_CASE("metrics render ratio summary lines") {
  Metrics m;
  CHECK(m.render().find("ratio_count 0") != std::string::npos);
  m.observe_ratio(Rational(1, 4));
  m.observe_ratio(Rational(3, 4));
  std::string text = m.render();
  CHECK(text.find("ratio_count 2") != std::string::npos);
  CHECK(text.find("ratio_min 0.250000000") != std::string::npos);
  CHECK(text.find("ratio_max 0.750000000") != std::string::npos);
  CHECK(text.find("ratio_last 0.750000000") != std::string::npos);
  CHECK(text.find("ratio_mean 0.5") != std::string::npos);
}

TEST_CASE("carry store: idle entries expire after the TTL") {
  CarryStore store(0);  // everything idle is collectable
  {
    auto lease = store.acquire("a");
    lease.update(42, 1);
  }
  CHECK(store.size() == 1);
  { auto lease = store.acquire("b"); }  // triggers pruning of "a"
  CHECK(store.size() == 1);
  {
    auto lease = store.acquire("a");  // fresh entry, carry gone
    CHECK(lease.carry() == 0);
    CHECK(lease.next_id() == 0);
  }
}

TEST_CASE("http: input and CoT injections share one id sequence") {
  auto cfg = turn_config(100);
  cfg.policy.targets = {InjectionTarget::UserInput, InjectionTarget::CoT};
  Gateway gw(cfg, [](const json&) { return std::make_unique<MockUpstream>(5, 500); });
  LiveGateway live(gw);
  httplib::Client cli("127.0.0.1", live.port);

  json body = user_body(synthetic_token_text(250));
  body["stream"] = true;
  body["conversation_id"] = "both";
  auto res = cli.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  auto events = parse_sse(res->body);
  std::vector<std::uint64_t> cot_ids;
  for (const auto& ev : events)
    if (ev.name == "interruption") cot_ids.push_back(ev.data["id"].get<std::uint64_t>());
  // 250 input tokens at t=100 -> ids 0,1; CoT picks up from 2.
  REQUIRE(!cot_ids.empty());
  CHECK(cot_ids.front() == 2);
  CHECK(events.back().data["records"] == 2 + cot_ids.size());
  CHECK(gw.metrics().injections_turn_level.load() == 2);
  CHECK(gw.metrics().injections_cot.load() == cot_ids.size());
}

TEST_CASE("mock upstream factory parses its parameters") {
  auto factory = make_upstream_factory("mock:seed=5,total=42");
  REQUIRE(factory);
  auto client = factory(json::object());
  auto stream = client->start(Context{});
  std::string out;
  while (auto c = stream->next()) out += *c;
  CHECK(count_tokens(out) == 42);

  CHECK_THROWS_AS(make_upstream_factory("mock:bogus"), PolicyError);
  CHECK_THROWS_AS(make_upstream_factory("ftp://x"), PolicyError);
  CHECK_THROWS_AS(make_upstream_factory("https://secure"), PolicyError);
  CHECK_FALSE(make_upstream_factory(""));
}
