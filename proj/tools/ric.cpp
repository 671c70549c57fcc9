// ric — token-interval interruption gateway and toolkit.
//
//   ric serve <config>                       run the HTTP gateway
//   ric transform [--config FILE] < body     apply the policy to a chat body
//   ric simulate --tokens N --seed S --interval T
//                                            interleave the deterministic mock
//   ric sweep --grid FILE                    parameter sweep, CSV on stdout
//   ric strip [--config FILE] < text         remove injected blocks
//   ric count < text                         token count under the default rule
//
// Exit codes: 0 success, 1 usage or input error, 2 policy/config invalid,
// 3 upstream failure.

#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ric/analytics.hpp"
#include "ric/engine.hpp"
#include "ric/gateway/config.hpp"
#include "ric/gateway/service.hpp"
#include "ric/interleave.hpp"
#include "ric/tokens.hpp"

namespace {

std::string read_stdin() {
  std::ostringstream ss;
  ss << std::cin.rdbuf();
  return ss.str();
}

// Grid files reuse the flat key=value shape with comma-separated lists:
//   s_p = 0, 200
//   s_i = 50
//   t = 500, 1000
//   l = 10000, 100000
ric::SweepGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ric::PolicyError("cannot open grid file '" + path + "'");
  ric::SweepGrid grid;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = ric::gateway::detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ric::PolicyError("grid line " + std::to_string(line_no) + " has no '='");
    std::string key = ric::gateway::detail::trim(std::string_view(line).substr(0, eq));
    std::string value = ric::gateway::detail::trim(std::string_view(line).substr(eq + 1));
    std::vector<ric::TokenCount>* field = nullptr;
    if (key == "s_p") field = &grid.s_p;
    else if (key == "s_i") field = &grid.s_i;
    else if (key == "t") field = &grid.t;
    else if (key == "l") field = &grid.l;
    else throw ric::PolicyError("unknown grid key '" + key + "' (expected s_p, s_i, t, l)");
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
      field->push_back(ric::gateway::detail::parse_u64(key, ric::gateway::detail::trim(item)));
  }
  return grid;
}

int cmd_count() {
  std::cout << ric::count_tokens(read_stdin()) << "\n";
  return 0;
}

int cmd_strip(const std::string& config_path) {
  ric::InterruptionPolicy policy;
  if (!config_path.empty()) policy = ric::gateway::load_config_file(config_path).policy;
  std::cout << ric::strip_interruptions(read_stdin(), policy);
  return 0;
}

int cmd_transform(const std::string& config_path) {
  ric::gateway::GatewayConfig config;
  if (!config_path.empty()) config = ric::gateway::load_config_file(config_path);
  ric::gateway::Gateway gateway(config, ric::gateway::UpstreamFactory{});
  auto reply = gateway.handle_transform(read_stdin());
  std::cout << reply.body << "\n";
  if (reply.status != 200) {
    std::cerr << "transform rejected with status " << reply.status << "\n";
    return 1;
  }
  return 0;
}

int cmd_simulate(std::uint64_t tokens, std::uint64_t seed, std::uint64_t interval,
                 std::uint64_t max_tokens, std::uint64_t refuse_after,
                 const std::string& text) {
  ric::InterruptionPolicy policy;
  policy.interval_tokens = interval;
  policy.targets = {ric::InjectionTarget::CoT};
  if (!text.empty()) policy.default_text = text;

  ric::MockUpstream upstream(seed, tokens);
  if (refuse_after > 0) upstream.refuse_after(refuse_after);

  auto result = ric::run_interleaved(ric::Context{}, policy, upstream,
                                     max_tokens ? max_tokens
                                                : std::numeric_limits<ric::TokenCount>::max());

  nlohmann::json out;
  out["state"] = ric::session_state_name(result.state);
  out["emitted_tokens"] = result.emitted_tokens;
  out["transcript_tokens"] = ric::count_tokens(result.transcript);
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : result.segments) segs.push_back(ric::count_tokens(s));
  out["segment_tokens"] = segs;
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : result.records)
    recs.push_back({{"id", r.id}, {"off", r.offset_tokens}, {"text", r.text}});
  out["records"] = recs;
  if (!result.error.empty()) out["error"] = result.error;
  std::cout << out.dump(2) << "\n";
  return result.state == ric::SessionState::Done ? 0 : 3;
}

int cmd_sweep(const std::string& grid_path) {
  auto grid = load_grid(grid_path);
  std::cout << ric::sweep_csv(ric::sweep(grid));
  return 0;
}

int cmd_serve(const std::string& config_path) {
  auto config = ric::gateway::load_config_file(config_path);
  ric::gateway::Gateway gateway(config);
  std::cerr << "ric gateway listening on " << config.listen_host << ":" << config.listen_port
            << (config.upstream.empty() ? " (transform-only)" : " (proxy to " + config.upstream + ")")
            << "\n";
  if (!gateway.listen()) {
    std::cerr << "failed to bind " << config.listen_host << ":" << config.listen_port << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-interval interruption gateway"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "run the HTTP gateway");
  std::string serve_config;
  serve->add_option("config", serve_config, "config file")->required();

  auto* transform = app.add_subcommand("transform", "transform a chat body from stdin");
  std::string transform_config;
  transform->add_option("--config", transform_config, "config file");

  auto* simulate = app.add_subcommand("simulate", "run the deterministic mock interleaver");
  std::uint64_t sim_tokens = 0;
  std::uint64_t sim_seed = 1;
  std::uint64_t sim_interval = 1000;
  std::uint64_t sim_max = 0;
  std::uint64_t sim_refuse = 0;
  std::string sim_text;
  simulate->add_option("--tokens", sim_tokens, "tokens the mock emits")->required();
  simulate->add_option("--seed", sim_seed, "mock stream seed");
  simulate->add_option("--interval", sim_interval, "injection interval t");
  simulate->add_option("--max-tokens", sim_max, "emission budget (0 = unlimited)");
  simulate->add_option("--refuse-after", sim_refuse, "fail the mock after N tokens");
  simulate->add_option("--text", sim_text, "interruption text");

  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate a parameter grid to CSV");
  std::string grid_path;
  sweep_cmd->add_option("--grid", grid_path, "grid file")->required();

  auto* strip = app.add_subcommand("strip", "strip injected blocks from stdin");
  std::string strip_config;
  strip->add_option("--config", strip_config, "config file");

  app.add_subcommand("count", "count tokens on stdin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("count")) return cmd_count();
    if (app.got_subcommand("strip")) return cmd_strip(strip_config);
    if (app.got_subcommand("transform")) return cmd_transform(transform_config);
    if (app.got_subcommand("simulate"))
      return cmd_simulate(sim_tokens, sim_seed, sim_interval, sim_max, sim_refuse, sim_text);
    if (app.got_subcommand("sweep")) return cmd_sweep(grid_path);
    if (app.got_subcommand("serve")) return cmd_serve(serve_config);
  } catch (const ric::PolicyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ric::InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ric::UpstreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ric::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
