#pragma once

// Subcommand bodies shared by the tracelab CLI and the test suites. Each
// returns file contents; callers decide where they go.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracelab/convergence.hpp"
#include "tracelab/core.hpp"
#include "tracelab/legacy.hpp"
#include "tracelab/ppm.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/scenario.hpp"
#include "tracelab/spie.hpp"

namespace tracelab {

inline constexpr const char* kToolVersion = "0.1.0";

// Writes next to the target, then renames, so a failed run leaves no
// partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "short write to '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string metadata_header(const std::string& command, std::uint64_t seed,
                                   const std::vector<std::pair<std::string, std::string>>& config) {
  std::ostringstream os;
  os << "# tracelab " << kToolVersion << '\n';
  os << "# command: " << command << '\n';
  os << "# seed: " << seed << '\n';
  os << "# config:";
  for (const auto& [k, v] : config) os << ' ' << k << '=' << v;
  os << '\n';
  return os.str();
}

template <typename T>
std::string join_values(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << format_double(v[i]);
    } else {
      os << v[i];
    }
  }
  return os.str();
}

inline std::string csv_number(double v) { return std::isnan(v) ? "nan" : format_double(v); }

struct MarkProbOptions {
  double p = 0.5;
  std::size_t max_d = 6;
  std::uint64_t packets = 100'000;
  std::uint64_t seed = 1;
};

// Survival table for one p with a Monte-Carlo column: the fraction of
// `packets` packets on a max_d-hop path whose surviving mark came from R_d.
inline std::vector<double> monte_carlo_survival(double p, std::size_t max_d, std::uint64_t packets, std::uint64_t seed) {
  auto scenario = build_linear_path(max_d, p);
  Rng rng(derive_seed(seed, {std::bit_cast<std::uint64_t>(p), max_d}));
  std::vector<std::uint64_t> hits(max_d + 1, 0);
  for (std::uint64_t s = 0; s < packets; ++s) {
    auto pkt = forward_and_mark(scenario.path, p, rng, s);
    if (pkt.node_field) ++hits[raw(*pkt.node_field)];  // router R_d has id d
  }
  std::vector<double> out;
  for (std::size_t d = 1; d <= max_d; ++d) out.push_back(static_cast<double>(hits[d]) / static_cast<double>(packets));
  return out;
}

inline std::string run_mark_prob(const MarkProbOptions& o) {
  require_probability(o.p, "p");
  require(o.max_d >= 1, "max-d must be >= 1");
  require(o.packets >= 1, "packets must be >= 1");
  std::ostringstream os;
  os << metadata_header("mark-prob", o.seed,
                        {{"p", format_double(o.p)}, {"max_d", std::to_string(o.max_d)},
                         {"packets", std::to_string(o.packets)}});
  os << "p,d,probability,monte_carlo\n";
  const auto mc = monte_carlo_survival(o.p, o.max_d, o.packets, o.seed);
  for (const auto& pt : survival_curve(o.p, o.max_d))
    os << format_double(o.p) << ',' << pt.distance << ',' << format_double(pt.probability) << ','
       << format_double(mc[pt.distance - 1]) << '\n';
  return os.str();
}

struct ThresholdOptions {
  std::size_t n_max = 25;
  double confidence = 0.99;
};

inline std::string run_threshold(const ThresholdOptions& o) {
  require(o.n_max >= 1, "n-max must be >= 1");
  std::ostringstream os;
  os << metadata_header("threshold", 0,
                        {{"n_max", std::to_string(o.n_max)}, {"confidence", format_double(o.confidence)}});
  os << "n,p_threshold\n";
  for (std::size_t n = 1; n <= o.n_max; ++n)
    os << n << ',' << format_double(threshold_marking_probability(n, o.confidence)) << '\n';
  return os.str();
}

struct ConvergenceOutput {
  std::string summary_csv;
  std::string long_csv;
  std::vector<SweepSummary> summaries;
  std::vector<std::string> warnings;
};

inline ConvergenceOutput run_convergence(const SweepConfig& cfg) {
  ConvergenceOutput out;
  out.summaries = convergence_sweep(cfg);
  const auto header = metadata_header(
      "convergence", cfg.base_seed,
      {{"hops", join_values(cfg.hop_counts)}, {"p_grid", join_values(cfg.p_grid)},
       {"trials", std::to_string(cfg.trials)}, {"confidence", format_double(cfg.confidence)},
       {"max_packets", std::to_string(cfg.max_packets)}});
  std::ostringstream sum, lng;
  sum << header << "hop_count,p,trials,converged,exhausted,mean,ci_low,ci_high\n";
  lng << header;
  std::size_t panel = 0;
  std::size_t last_n = 0;
  for (const auto& s : out.summaries) {
    sum << s.hop_count << ',' << format_double(s.p) << ',' << s.trials << ',' << s.converged << ',' << s.exhausted
        << ',' << csv_number(s.mean) << ',' << csv_number(s.ci_low) << ',' << csv_number(s.ci_high) << '\n';
    if (panel == 0 || s.hop_count != last_n) {
      if (panel) lng << "\n\n";
      lng << "# panel " << panel++ << ": " << s.hop_count << "-hop attack path\n";
      lng << "hop_count,p,mean,ci_low,ci_high\n";
      last_n = s.hop_count;
    }
    lng << s.hop_count << ',' << format_double(s.p) << ',' << csv_number(s.mean) << ',' << csv_number(s.ci_low)
        << ',' << csv_number(s.ci_high) << '\n';
    if (s.exhaustion_warning()) {
      out.warnings.push_back("hop_count=" + std::to_string(s.hop_count) + " p=" + format_double(s.p) + ": " +
                             std::to_string(s.exhausted) + " of " + std::to_string(s.trials) +
                             " trials reached max_packets; mean excludes them");
    }
  }
  out.summary_csv = sum.str();
  out.long_csv = lng.str();
  return out;
}

namespace detail {

inline std::uint64_t param_uint(const Scenario& s, const std::string& key, std::uint64_t fallback) {
  auto it = s.params.find(key);
  if (it == s.params.end()) return fallback;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw Error(ErrorCode::ParseError, "param '" + key + "' expects an unsigned integer, got '" + it->second + "'");
  return v;
}

inline double param_real(const Scenario& s, const std::string& key, double fallback) {
  auto it = s.params.find(key);
  if (it == s.params.end()) return fallback;
  double v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw Error(ErrorCode::ParseError, "param '" + key + "' expects a number, got '" + it->second + "'");
  return v;
}

inline bool param_bool(const Scenario& s, const std::string& key, bool fallback) {
  auto it = s.params.find(key);
  if (it == s.params.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw Error(ErrorCode::ParseError, "param '" + key + "' expects true or false, got '" + it->second + "'");
}

inline std::vector<NodeId> param_nodes(const Scenario& s, const std::string& key) {
  std::vector<NodeId> out;
  auto it = s.params.find(key);
  if (it == s.params.end()) return out;
  std::string_view rest = it->second;
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto tok = rest.substr(0, comma);
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
      throw Error(ErrorCode::ParseError, "param '" + key + "' expects comma-separated node ids");
    out.push_back(node(v));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> echo_params(const Scenario& s) {
  return {s.params.begin(), s.params.end()};
}

}  // namespace detail

// Forwarding episode over the scenario followed by a cross-AS traceback of
// the attack packet from the victim's STM.
struct SpieTraceOutput {
  std::string text;
  CrossAsResult result;
  PacketDigest digest;
};

inline SpieTraceOutput run_spie_trace(const Scenario& s, std::uint64_t seed) {
  const Topology& topo = s.topology;
  require(topo.attacker() && topo.victim(), "scenario must declare attacker and victim");
  const auto bits = detail::param_uint(s, "bloom_bits", DigestStore::kDefaultBits);
  const auto hashes = detail::param_uint(s, "bloom_hashes", DigestStore::kDefaultHashes);
  const auto background = detail::param_uint(s, "background_packets", 200);
  const auto attack_seq = static_cast<std::uint32_t>(detail::param_uint(s, "attack_sequence", 1));
  const bool inject = detail::param_bool(s, "inject_attack", true);

  TracebackAgents agents(topo, bits, static_cast<unsigned>(hashes));
  Rng rng(derive_seed(seed, {0x5b1e}));
  std::vector<NodeId> hosts;
  for (const auto& [id, h] : topo.hosts()) hosts.push_back(id);
  for (std::uint64_t i = 0; i < background && hosts.size() >= 2; ++i) {
    NodeId a = hosts[rng.below(hosts.size())];
    NodeId b = hosts[rng.below(hosts.size())];
    if (a == b || topo.route(a, b).empty()) continue;
    agents.forward(a, b, make_packet(a, b, static_cast<std::uint32_t>(rng.next()), kBenignFlowTag));
  }
  const PacketBytes attack = make_packet(*topo.attacker(), *topo.victim(), attack_seq, kAttackFlowTag);
  if (inject) agents.forward(*topo.attacker(), *topo.victim(), attack);

  SpieTraceOutput out;
  out.digest = digest(attack);
  out.result = cross_as_traceback(agents, *topo.victim(), out.digest);
  std::ostringstream os;
  os << metadata_header("spie-trace", seed, detail::echo_params(s));
  os << "# digest: " << to_hex(out.digest) << '\n';
  os << out.result.transcript.to_text();
  os << out.result.path.to_text();
  os << "STATUS " << (out.result.status == CrossAsStatus::OriginFound ? "origin-found" : "origin-not-found") << '\n';
  out.text = os.str();
  return out;
}

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"controlled-flooding", "input-debugging", "itrace"};
  return names;
}

inline nlohmann::ordered_json report_json(const TraceReport& r, std::uint64_t seed) {
  auto opt = [](const std::optional<NodeId>& n) -> nlohmann::ordered_json {
    return n ? nlohmann::ordered_json(raw(*n)) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["strategy"] = r.strategy;
  j["seed"] = seed;
  auto paths = nlohmann::ordered_json::array();
  for (const auto& p : r.paths) {
    auto arr = nlohmann::ordered_json::array();
    for (NodeId n : p) arr.push_back(raw(n));
    paths.push_back(arr);
  }
  j["paths"] = paths;
  j["origin"] = opt(r.origin);
  j["boundary"] = opt(r.boundary);
  j["firewall"] = opt(r.firewall);
  j["multi_source"] = r.multi_source;
  j["packets_consumed"] = r.packets_consumed;
  j["ticks_elapsed"] = r.ticks_elapsed;
  j["rejected_unauthenticated"] = r.rejected_unauthenticated;
  return j;
}

struct StrategyOutput {
  std::string text;
  TraceReport report;
};

// Runs one of strategy_names() over the scenario's flows.
inline StrategyOutput run_strategy(const std::string& name, const Scenario& s, std::uint64_t seed) {
  const auto& names = strategy_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + name + "'; valid strategies: " + list);
  }
  const Topology& topo = s.topology;
  require(topo.attacker() && topo.victim(), "scenario must declare attacker and victim");
  std::vector<FlowSpec> flows = s.flows;
  if (std::none_of(flows.begin(), flows.end(), [](const FlowSpec& f) { return f.attack; }))
    flows.push_back({*topo.attacker(), *topo.victim(), 1.0, true});

  FlowState state;
  state.live = detail::param_bool(s, "live", true);
  state.rate = detail::param_real(s, "attack_rate_scale", 1.0);
  if (s.params.contains("lifetime")) state.lifetime_ticks = detail::param_uint(s, "lifetime", 0);

  Rng rng(derive_seed(seed, {0x57a7}));
  TraceReport report;
  if (name == "input-debugging") {
    Traffic traffic(topo, flows);
    InputDebuggingConfig cfg;
    cfg.window_ticks = detail::param_uint(s, "window", cfg.window_ticks);
    report = input_debugging(traffic, *topo.victim(),
                             AttackSignature::for_destination_and_tag(*topo.victim(), kAttackFlowTag), state, cfg);
  } else if (name == "controlled-flooding") {
    Traffic traffic(topo, flows);
    ControlledFloodingConfig cfg;
    cfg.window_ticks = detail::param_uint(s, "window", cfg.window_ticks);
    cfg.flood_rate = detail::param_real(s, "flood_rate", cfg.flood_rate);
    cfg.sensitivity = detail::param_real(s, "sensitivity", cfg.sensitivity);
    auto flooders = detail::param_nodes(s, "flood_hosts");
    if (flooders.empty())
      for (const auto& [id, h] : topo.hosts())
        if (id != *topo.attacker() && id != *topo.victim()) flooders.push_back(id);
    report = controlled_flooding(traffic, *topo.victim(), flooders, state, rng, cfg);
  } else {
    if (!state.live) throw Error(ErrorCode::AttackEnded, "attack is not in progress");
    const auto packets = detail::param_uint(s, "packets", 200'000);
    const auto forged = detail::param_uint(s, "forged_messages", 0);
    const auto max_gap = detail::param_uint(s, "max_gap", 2);
    std::optional<double> q;
    if (s.params.contains("itrace_q")) q = detail::param_real(s, "itrace_q", 0.0);
    const AttackPath path = topo.attack_path();
    auto messages = itrace_episode(topo, path, packets, rng, q);
    std::vector<NodeId> routers;
    for (const auto& [id, r] : topo.routers()) routers.push_back(id);
    for (std::uint64_t i = 0; i < forged && !routers.empty(); ++i) {
      ItraceMessage m;
      m.emitting_router = routers[rng.below(routers.size())];
      m.upstream = routers[rng.below(routers.size())];
      m.downstream = *topo.victim();
      m.destination = *topo.victim();
      m.authentic = false;
      messages.push_back(m);
    }
    std::set<NodeId> participating;
    for (const auto& [id, r] : topo.routers())
      if (q ? *q > 0 : r.itrace_probability > 0) participating.insert(id);
    auto rec = itrace_reconstruct(messages, topo, participating, *topo.victim(), max_gap);
    report.strategy = "itrace";
    for (const auto& c : rec.candidates) report.paths.push_back(c.routers);
    report.rejected_unauthenticated = rec.rejected_unauthenticated;
    report.packets_consumed = packets;
    report.ticks_elapsed = packets;
  }
  StrategyOutput out;
  out.report = report;
  auto cfg = detail::echo_params(s);
  cfg.insert(cfg.begin(), {"strategy", name});
  out.text = metadata_header("strategy", seed, cfg) + report_json(report, seed).dump() + "\n";
  return out;
}

}  // namespace tracelab
