#pragma once

// Link testing (input debugging, controlled flooding) and ICMP traceback
// against a simulated topology. Paths in results are victim-adjacent first.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tracelab/core.hpp"
#include "tracelab/packet.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/scenario.hpp"
#include "tracelab/topology.hpp"

namespace tracelab {

inline constexpr std::uint32_t kAttackFlowTag = 0xa77ac000u;
inline constexpr std::uint32_t kBenignFlowTag = 0xbe000000u;

// Predicate over identity bytes: (bytes & mask) == value.
struct AttackSignature {
  PacketBytes mask{};
  PacketBytes value{};

  bool matches(const PacketBytes& b) const {
    for (std::size_t i = 0; i < kIdentityBytes; ++i)
      if ((b[i] & mask[i]) != value[i]) return false;
    return true;
  }

  // Destination address plus the flow tag in the first payload word.
  static AttackSignature for_destination_and_tag(NodeId destination, std::uint32_t tag) {
    AttackSignature s;
    const PacketBytes ref = make_packet(node(0), destination, 0, tag);
    for (std::size_t i = ipv4::kDestination; i < ipv4::kDestination + 4; ++i) s.mask[i] = 0xff;
    for (std::size_t i = kHeaderBytes; i < kHeaderBytes + 4; ++i) s.mask[i] = 0xff;
    for (std::size_t i = 0; i < kIdentityBytes; ++i) s.value[i] = ref[i] & s.mask[i];
    return s;
  }
};

// The attack as seen by a link-testing operator. `rate` scales every attack
// flow's per-tick rate. A set lifetime ends the attack after that many ticks.
struct FlowState {
  bool live = true;
  double rate = 1.0;
  std::optional<std::uint64_t> lifetime_ticks;
};

// Flows of a scenario with their routed node sequences and packet templates.
class Traffic {
 public:
  struct Flow {
    FlowSpec spec;
    std::vector<NodeId> route;  // host, routers..., host
    PacketBytes identity{};
  };

  Traffic(const Topology& topo, const std::vector<FlowSpec>& flows) : topo_(&topo) {
    std::uint32_t benign = 0;
    for (const auto& f : flows) {
      Flow flow;
      flow.spec = f;
      flow.route = topo.route(f.source, f.destination);
      require(flow.route.size() >= 3, "flow " + std::to_string(raw(f.source)) + "->" +
                                          std::to_string(raw(f.destination)) + " has no router path");
      const std::uint32_t tag = f.attack ? kAttackFlowTag : (kBenignFlowTag | ++benign);
      flow.identity = make_packet(f.source, f.destination, 0, tag);
      flows_.push_back(std::move(flow));
    }
  }

  const Topology& topology() const noexcept { return *topo_; }
  const std::vector<Flow>& flows() const noexcept { return flows_; }

  // Whether the flow's route uses the directed link from -> to.
  static bool crosses(const Flow& f, NodeId from, NodeId to) {
    for (std::size_t i = 0; i + 1 < f.route.size(); ++i)
      if (f.route[i] == from && f.route[i + 1] == to) return true;
    return false;
  }

  double rate_of(const Flow& f, const FlowState& state) const { return f.spec.attack ? f.spec.rate * state.rate : f.spec.rate; }

 private:
  const Topology* topo_;
  std::vector<Flow> flows_;
};

// Outcome of one strategy run.
struct TraceReport {
  std::string strategy;
  std::vector<std::vector<NodeId>> paths;
  std::optional<NodeId> origin;    // host or access router the trace ended at
  std::optional<NodeId> boundary;  // first router outside the operator's domain
  std::optional<NodeId> firewall;  // firewall that stopped the trace
  bool multi_source = false;
  std::uint64_t packets_consumed = 0;
  std::uint64_t ticks_elapsed = 0;
  std::size_t rejected_unauthenticated = 0;
};

namespace detail {

inline void spend_ticks(TraceReport& r, std::uint64_t ticks, const FlowState& flow) {
  r.ticks_elapsed += ticks;
  if (flow.lifetime_ticks && r.ticks_elapsed > *flow.lifetime_ticks) {
    throw Error(ErrorCode::AttackEnded, "attack stopped after " + std::to_string(*flow.lifetime_ticks) +
                                            " ticks; link testing cannot continue post-mortem");
  }
}

// Victim access router that carries attack traffic (lowest id on ties).
inline NodeId victim_access_router(const Traffic& traffic, NodeId victim) {
  const Topology& topo = traffic.topology();
  for (NodeId r : topo.neighbors(victim)) {
    for (const auto& f : traffic.flows())
      if (f.spec.attack && Traffic::crosses(f, r, victim)) return r;
  }
  require(!topo.neighbors(victim).empty(), "victim has no access router");
  return topo.neighbors(victim).front();
}

}  // namespace detail

struct InputDebuggingConfig {
  std::uint64_t window_ticks = 1000;
};

// Installs the signature filter hop by hop, starting at the victim's first
// router, and follows the ingress link that carries the most matching
// traffic. Stops at the origin host, at the operator's domain boundary, or at
// a firewall.
inline TraceReport input_debugging(const Traffic& traffic, NodeId victim, const AttackSignature& signature,
                                   const FlowState& flow, const InputDebuggingConfig& cfg = {}) {
  const Topology& topo = traffic.topology();
  require(topo.is_host(victim), "victim must be a host");
  require(cfg.window_ticks >= 1, "observation window must be >= 1 tick");
  if (!flow.live) throw Error(ErrorCode::AttackEnded, "attack is not in progress");

  TraceReport report;
  report.strategy = "input-debugging";
  std::vector<NodeId> path;
  NodeId downstream = victim;
  NodeId current = detail::victim_access_router(traffic, victim);
  const AsId home = topo.router(current).domain;
  const double window = static_cast<double>(cfg.window_ticks);

  for (;;) {
    path.push_back(current);
    detail::spend_ticks(report, cfg.window_ticks, flow);
    std::map<NodeId, double> by_ingress;
    for (const auto& f : traffic.flows()) {
      if (!signature.matches(f.identity)) continue;
      for (std::size_t i = 1; i + 1 < f.route.size(); ++i) {
        if (f.route[i] == current && f.route[i + 1] == downstream)
          by_ingress[f.route[i - 1]] += traffic.rate_of(f, flow) * window;
      }
    }
    if (by_ingress.empty()) {
      throw Error(ErrorCode::NoMatchingIngress,
                  "no traffic matching the signature at router " + std::to_string(raw(current)));
    }
    double seen = 0;
    std::pair<NodeId, double> best{by_ingress.begin()->first, -1.0};
    for (const auto& [ingress, packets] : by_ingress) {
      seen += packets;
      if (packets > best.second) best = {ingress, packets};
    }
    report.packets_consumed += static_cast<std::uint64_t>(std::llround(seen));
    if (by_ingress.size() > 1) report.multi_source = true;

    const NodeId up = best.first;
    if (topo.is_host(up)) {
      report.origin = up;
      break;
    }
    if (topo.router(up).domain != home) {
      report.boundary = up;
      break;
    }
    if (topo.router(up).firewall) {
      report.firewall = up;
      break;
    }
    downstream = current;
    current = up;
  }
  report.paths.push_back(std::move(path));
  return report;
}

struct ControlledFloodingConfig {
  double flood_rate = 10.0;     // packets per tick injected on the tested link
  double sensitivity = 0.2;     // relative depression that counts as a hit
  std::uint64_t window_ticks = 1000;
  double drop_cap = 0.95;
};

// Drop probability for attack packets on a flooded link with a single
// shared buffer: flood / (flood + background + attack), capped.
inline double flood_drop_probability(double flood, double background, double attack, double cap = 0.95) {
  const double total = flood + background + attack;
  return total > 0 ? std::min(cap, flood / total) : 0.0;
}

struct LinkTest {
  NodeId upstream{};
  NodeId router{};
  std::optional<NodeId> flood_host;
  double depression = 0.0;
};

// Relative drop in attack packets received by the victim while `link` is
// flooded for one window.
inline double measure_depression(const Traffic& traffic, NodeId victim, NodeId from, NodeId to,
                                 const FlowState& flow, const ControlledFloodingConfig& cfg, Rng& rng) {
  double background = 0, attack = 0;
  for (const auto& f : traffic.flows()) {
    if (!Traffic::crosses(f, from, to)) continue;
    (f.spec.attack ? attack : background) += traffic.rate_of(f, flow);
  }
  const double drop = flood_drop_probability(cfg.flood_rate, background, attack, cfg.drop_cap);
  std::uint64_t baseline = 0, received = 0;
  for (const auto& f : traffic.flows()) {
    if (!f.spec.attack || f.route.back() != victim) continue;
    const auto sent = static_cast<std::uint64_t>(std::llround(traffic.rate_of(f, flow) * static_cast<double>(cfg.window_ticks)));
    baseline += sent;
    if (!Traffic::crosses(f, from, to)) {
      received += sent;
      continue;
    }
    for (std::uint64_t k = 0; k < sent; ++k)
      if (!rng.bernoulli(drop)) ++received;
  }
  if (baseline == 0) return 0.0;
  return 1.0 - static_cast<double>(received) / static_cast<double>(baseline);
}

// Floods each incoming link of the current router in turn using a host that
// the topology map shows routing through that link, and moves upstream over
// the link whose flooding depresses the attack rate the most (above the
// sensitivity). Ends at a router with attached hosts once no router link
// responds.
inline TraceReport controlled_flooding(const Traffic& traffic, NodeId victim, const std::vector<NodeId>& flood_hosts,
                                       const FlowState& flow, Rng& rng, const ControlledFloodingConfig& cfg = {}) {
  const Topology& topo = traffic.topology();
  require(topo.is_host(victim), "victim must be a host");
  require(cfg.sensitivity > 0 && cfg.sensitivity < 1, "sensitivity must lie in (0,1)");
  if (!flow.live) throw Error(ErrorCode::AttackEnded, "attack is not in progress");

  TraceReport report;
  report.strategy = "controlled-flooding";
  std::vector<NodeId> path;
  NodeId downstream = victim;
  NodeId current = detail::victim_access_router(traffic, victim);
  std::set<NodeId> on_path;

  for (;;) {
    path.push_back(current);
    on_path.insert(current);
    std::vector<LinkTest> hits;
    for (NodeId up : topo.neighbors(current)) {
      if (up == downstream || !topo.is_router(up) || on_path.contains(up)) continue;
      std::optional<NodeId> flooder;
      for (NodeId h : flood_hosts) {
        auto r = topo.route(h, current);
        if (r.size() >= 2 && r[r.size() - 2] == up) {
          flooder = h;
          break;
        }
      }
      if (!flooder) continue;
      detail::spend_ticks(report, cfg.window_ticks, flow);
      LinkTest t{up, current, flooder, measure_depression(traffic, victim, up, current, flow, cfg, rng)};
      for (const auto& f : traffic.flows())
        if (f.spec.attack && f.route.back() == victim)
          report.packets_consumed += static_cast<std::uint64_t>(
              std::llround(traffic.rate_of(f, flow) * static_cast<double>(cfg.window_ticks)));
      if (t.depression > cfg.sensitivity) hits.push_back(t);
    }
    if (hits.empty()) {
      bool has_hosts = false;
      for (NodeId h : topo.attached_hosts(current)) has_hosts = has_hosts || h != downstream;
      if (!has_hosts) {
        throw Error(ErrorCode::InconclusiveLink,
                    "no incoming link of router " + std::to_string(raw(current)) + " depressed the attack rate");
      }
      report.origin = current;
      break;
    }
    if (hits.size() > 1) report.multi_source = true;
    auto best = std::max_element(hits.begin(), hits.end(), [](const LinkTest& a, const LinkTest& b) {
      return a.depression < b.depression || (a.depression == b.depression && a.upstream > b.upstream);
    });
    downstream = current;
    current = best->upstream;
  }
  report.paths.push_back(std::move(path));
  return report;
}

// ICMP traceback message. upstream/downstream are the neighbours the sampled
// packet arrived from and left towards.
struct ItraceMessage {
  NodeId emitting_router{};
  NodeId upstream{};
  NodeId downstream{};
  NodeId destination{};
  std::uint64_t sampled_packet = 0;
  bool authentic = true;

  bool operator==(const ItraceMessage&) const = default;
};

struct ForwardingHop {
  NodeId router{};
  NodeId upstream{};
  NodeId downstream{};
};

// With probability q the router emits a message about the packet it is
// forwarding. Forwarding itself is not affected.
inline std::optional<ItraceMessage> itrace_forward(const ForwardingHop& hop, std::uint64_t packet_sequence,
                                                   NodeId destination, double q, Rng& rng) {
  require_probability(q, "iTrace sampling probability");
  if (!rng.bernoulli(q)) return std::nullopt;
  return ItraceMessage{hop.router, hop.upstream, hop.downstream, destination, packet_sequence, true};
}

// Sends `packets` packets down the path; every router with a non-zero
// itrace probability samples with that probability unless q_override is set.
inline std::vector<ItraceMessage> itrace_episode(const Topology& topo, const AttackPath& path, std::uint64_t packets,
                                                 Rng& rng, std::optional<double> q_override = {}) {
  std::vector<ItraceMessage> out;
  std::vector<ForwardingHop> hops;
  for (std::size_t i = 0; i < path.routers.size(); ++i) {
    hops.push_back({path.routers[i], i == 0 ? path.attacker : path.routers[i - 1],
                    i + 1 == path.routers.size() ? path.victim : path.routers[i + 1]});
  }
  std::vector<double> q;
  for (const auto& h : hops) q.push_back(q_override ? *q_override : topo.router(h.router).itrace_probability);
  for (std::uint64_t s = 0; s < packets; ++s) {
    for (std::size_t i = 0; i < hops.size(); ++i) {
      if (q[i] <= 0.0) continue;
      if (auto m = itrace_forward(hops[i], s, path.victim, q[i], rng)) out.push_back(*m);
    }
  }
  return out;
}

struct ItraceCandidate {
  std::vector<NodeId> routers;  // victim-adjacent first
  std::vector<NodeId> inferred; // routers filled in across gaps
  bool operator==(const ItraceCandidate&) const = default;
};

struct ItraceReconstruction {
  std::vector<ItraceCandidate> candidates;  // fewest inferred routers first
  std::size_t rejected_unauthenticated = 0;
};

// Chains authenticated messages into segments of participating routers and
// joins them across runs of at most `max_gap` non-participating routers
// using the topology map. A candidate must include every reporting router.
inline ItraceReconstruction itrace_reconstruct(const std::vector<ItraceMessage>& messages, const Topology& topo,
                                               const std::set<NodeId>& participating, NodeId victim,
                                               std::size_t max_gap = 2) {
  ItraceReconstruction out;
  std::map<NodeId, std::set<NodeId>> downs;
  for (const auto& m : messages) {
    if (!m.authentic) {
      ++out.rejected_unauthenticated;
      continue;
    }
    downs[m.emitting_router].insert(m.downstream);
  }
  if (downs.empty()) return out;
  const std::size_t reporters = downs.size();

  std::vector<NodeId> walk;
  std::vector<NodeId> inferred;
  std::set<NodeId> used;

  // Gap fillers: simple paths from `from` through non-participating routers
  // ending next to `to`.
  auto bridges = [&](NodeId from, NodeId to) {
    std::vector<std::vector<NodeId>> found;
    std::vector<NodeId> chain;
    auto extend = [&](auto&& self, NodeId at) -> void {
      for (NodeId g : topo.neighbors(at)) {
        if (!topo.is_router(g) || participating.contains(g) || used.contains(g)) continue;
        if (std::find(chain.begin(), chain.end(), g) != chain.end()) continue;
        chain.push_back(g);
        if (topo.linked(g, to)) found.push_back(chain);
        if (chain.size() < max_gap) self(self, g);
        chain.pop_back();
      }
    };
    extend(extend, from);
    return found;
  };

  std::set<std::pair<std::size_t, std::vector<NodeId>>> ranked;
  std::map<std::vector<NodeId>, std::vector<NodeId>> inferred_of;
  auto search = [&](auto&& self, NodeId at) -> void {
    if (used.size() - inferred.size() == reporters) {
      ranked.insert({inferred.size(), walk});
      inferred_of[walk] = inferred;
      return;
    }
    for (const auto& [r, d] : downs) {
      if (used.contains(r)) continue;
      if (d.contains(at)) {
        used.insert(r);
        walk.push_back(r);
        self(self, r);
        walk.pop_back();
        used.erase(r);
      }
      for (const auto& bridge : bridges(at, r)) {
        for (NodeId g : bridge) {
          used.insert(g);
          walk.push_back(g);
          inferred.push_back(g);
        }
        used.insert(r);
        walk.push_back(r);
        self(self, r);
        walk.pop_back();
        used.erase(r);
        for (std::size_t i = 0; i < bridge.size(); ++i) {
          used.erase(walk.back());
          walk.pop_back();
          inferred.pop_back();
        }
      }
    }
  };
  search(search, victim);
  for (const auto& [gaps, routers] : ranked) out.candidates.push_back({routers, inferred_of[routers]});
  return out;
}

}  // namespace tracelab
