#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tracelab/core.hpp"

namespace tracelab {

struct RouterNode {
  NodeId id{};
  AsId domain{};
  double marking_probability = 0.0;
  double itrace_probability = 0.0;
  bool firewall = false;

  bool operator==(const RouterNode&) const = default;
};

struct HostNode {
  NodeId id{};
  AsId domain{};

  bool operator==(const HostNode&) const = default;
};

struct AsInfo {
  bool spie_deployed = false;

  bool operator==(const AsInfo&) const = default;
};

// Router chain from attacker to victim. `routers` is stored in forwarding
// order, R_n first and R_1 (the victim's first hop) last.
struct AttackPath {
  NodeId attacker{};
  std::vector<NodeId> routers;
  NodeId victim{};

  std::size_t hop_count() const noexcept { return routers.size(); }

  // R_d, the router d hops from the victim (1 <= d <= hop_count()).
  NodeId at_distance(std::size_t d) const {
    require(d >= 1 && d <= routers.size(), "distance out of range");
    return routers[routers.size() - d];
  }

  std::vector<NodeId> victim_first() const { return {routers.rbegin(), routers.rend()}; }

  bool operator==(const AttackPath&) const = default;
};

// Hosts, routers, links and the AS-level overlay of one scenario. Built once
// through the add_* calls, then shared read-only.
class Topology {
 public:
  void add_as(AsId id, bool spie_deployed) {
    require(!ases_.contains(id), "duplicate AS " + std::to_string(raw(id)));
    ases_[id] = AsInfo{spie_deployed};
    as_adjacency_[id];
  }

  void add_as_edge(AsId a, AsId b) {
    require(a != b, "AS self-edge on AS " + std::to_string(raw(a)));
    require(ases_.contains(a) && ases_.contains(b), "AS edge references unknown AS");
    as_edges_.insert(std::minmax(a, b));
    insert_sorted(as_adjacency_[a], b);
    insert_sorted(as_adjacency_[b], a);
  }

  void add_router(const RouterNode& r) {
    require(!has_node(r.id), "duplicate node id " + std::to_string(raw(r.id)));
    require(ases_.contains(r.domain), "router " + std::to_string(raw(r.id)) + " in unknown AS");
    require_probability(r.marking_probability, "marking_probability");
    require_probability(r.itrace_probability, "itrace_probability");
    routers_[r.id] = r;
    adjacency_[r.id];
  }

  void add_host(NodeId id, AsId domain) {
    require(!has_node(id), "duplicate node id " + std::to_string(raw(id)));
    require(ases_.contains(domain), "host " + std::to_string(raw(id)) + " in unknown AS");
    hosts_[id] = HostNode{id, domain};
    adjacency_[id];
  }

  void add_link(NodeId a, NodeId b) {
    require(a != b, "self link");
    require(has_node(a) && has_node(b), "link references unknown node");
    require(is_router(a) || is_router(b), "host-to-host links are not modelled");
    links_.insert(std::minmax(a, b));
    insert_sorted(adjacency_[a], b);
    insert_sorted(adjacency_[b], a);
  }

  void set_attacker(NodeId id) { attacker_ = id; }
  void set_victim(NodeId id) { victim_ = id; }

  void set_deployment_horizon(int levels) {
    require(levels >= 1, "deployment_horizon must be >= 1");
    horizon_ = levels;
  }

  bool has_node(NodeId id) const { return routers_.contains(id) || hosts_.contains(id); }
  bool is_router(NodeId id) const { return routers_.contains(id); }
  bool is_host(NodeId id) const { return hosts_.contains(id); }

  const RouterNode& router(NodeId id) const {
    auto it = routers_.find(id);
    require(it != routers_.end(), "unknown router " + std::to_string(raw(id)));
    return it->second;
  }

  AsId domain_of(NodeId id) const {
    if (auto it = routers_.find(id); it != routers_.end()) return it->second.domain;
    if (auto it = hosts_.find(id); it != hosts_.end()) return it->second.domain;
    throw Error(ErrorCode::InvalidArgument, "unknown node " + std::to_string(raw(id)));
  }

  const std::vector<NodeId>& neighbors(NodeId id) const {
    auto it = adjacency_.find(id);
    require(it != adjacency_.end(), "unknown node " + std::to_string(raw(id)));
    return it->second;
  }

  bool linked(NodeId a, NodeId b) const { return links_.contains(std::minmax(a, b)); }

  std::vector<NodeId> routers_in(AsId domain) const {
    std::vector<NodeId> out;
    for (const auto& [id, r] : routers_)
      if (r.domain == domain) out.push_back(id);
    return out;
  }

  // Router neighbours of `id` that live in a different AS.
  std::vector<NodeId> external_neighbors(NodeId id) const {
    std::vector<NodeId> out;
    const AsId own = domain_of(id);
    for (NodeId n : neighbors(id))
      if (is_router(n) && router(n).domain != own) out.push_back(n);
    return out;
  }

  std::vector<NodeId> attached_hosts(NodeId router_id) const {
    std::vector<NodeId> out;
    for (NodeId n : neighbors(router_id))
      if (is_host(n)) out.push_back(n);
    return out;
  }

  const std::map<NodeId, RouterNode>& routers() const noexcept { return routers_; }
  const std::map<NodeId, HostNode>& hosts() const noexcept { return hosts_; }
  const std::set<std::pair<NodeId, NodeId>>& links() const noexcept { return links_; }
  const std::map<AsId, AsInfo>& ases() const noexcept { return ases_; }
  const std::set<std::pair<AsId, AsId>>& as_edges() const noexcept { return as_edges_; }
  int deployment_horizon() const noexcept { return horizon_; }
  std::optional<NodeId> attacker() const noexcept { return attacker_; }
  std::optional<NodeId> victim() const noexcept { return victim_; }

  bool has_as(AsId id) const { return ases_.contains(id); }

  bool deployed(AsId id) const {
    auto it = ases_.find(id);
    require(it != ases_.end(), "unknown AS " + std::to_string(raw(id)));
    return it->second.spie_deployed;
  }

  const std::vector<AsId>& as_neighbors(AsId id) const {
    auto it = as_adjacency_.find(id);
    require(it != as_adjacency_.end(), "unknown AS " + std::to_string(raw(id)));
    return it->second;
  }

  // Hop distance between two ASes over the AS graph; nullopt if disconnected.
  std::optional<int> as_distance(AsId from, AsId to) const {
    auto dist = as_distances(from);
    if (auto it = dist.find(to); it != dist.end()) return it->second;
    return std::nullopt;
  }

  std::map<AsId, int> as_distances(AsId from) const {
    std::map<AsId, int> dist{{from, 0}};
    std::queue<AsId> frontier;
    frontier.push(from);
    while (!frontier.empty()) {
      AsId cur = frontier.front();
      frontier.pop();
      for (AsId n : as_neighbors(cur)) {
        if (dist.contains(n)) continue;
        dist[n] = dist[cur] + 1;
        frontier.push(n);
      }
    }
    return dist;
  }

  // Shortest node sequence from `from` to `to`, both inclusive. Hosts are
  // never used as transit. Ties go to the lowest-numbered neighbour, so the
  // result is deterministic. Empty when unreachable.
  std::vector<NodeId> route(NodeId from, NodeId to) const {
    require(has_node(from) && has_node(to), "route endpoints must exist");
    if (from == to) return {from};
    std::map<NodeId, NodeId> parent;
    std::queue<NodeId> frontier;
    frontier.push(from);
    parent[from] = from;
    while (!frontier.empty()) {
      NodeId cur = frontier.front();
      frontier.pop();
      if (cur != from && is_host(cur)) continue;
      for (NodeId n : neighbors(cur)) {
        if (parent.contains(n)) continue;
        parent[n] = cur;
        if (n == to) {
          std::vector<NodeId> out{to};
          for (NodeId back = cur; back != from; back = parent[back]) out.push_back(back);
          out.push_back(from);
          std::reverse(out.begin(), out.end());
          return out;
        }
        frontier.push(n);
      }
    }
    return {};
  }

  // Router chain between two hosts along route().
  AttackPath path_between(NodeId source, NodeId destination) const {
    require(is_host(source) && is_host(destination), "path endpoints must be hosts");
    auto nodes = route(source, destination);
    require(nodes.size() >= 3, "no router path between hosts " + std::to_string(raw(source)) +
                                   " and " + std::to_string(raw(destination)));
    AttackPath path;
    path.attacker = source;
    path.victim = destination;
    path.routers.assign(nodes.begin() + 1, nodes.end() - 1);
    return path;
  }

  AttackPath attack_path() const {
    require(attacker_.has_value() && victim_.has_value(), "scenario has no attacker/victim");
    return path_between(*attacker_, *victim_);
  }

  // Structural checks that cannot be enforced incrementally.
  void validate() const {
    for (const auto& [a, b] : links_) {
      AsId da = domain_of(a), db = domain_of(b);
      if (da != db) {
        require(as_edges_.contains(std::minmax(da, db)),
                "link " + std::to_string(raw(a)) + "-" + std::to_string(raw(b)) +
                    " crosses ASes that are not adjacent");
      }
    }
    for (const auto& [id, h] : hosts_) {
      for (NodeId n : neighbors(id))
        require(router(n).domain == h.domain,
                "host " + std::to_string(raw(id)) + " attached to a router in another AS");
    }
    if (attacker_) require(is_host(*attacker_), "attacker must be a host");
    if (victim_) require(is_host(*victim_), "victim must be a host");
  }

  bool operator==(const Topology& other) const {
    return routers_ == other.routers_ && hosts_ == other.hosts_ && links_ == other.links_ &&
           ases_ == other.ases_ && as_edges_ == other.as_edges_ && horizon_ == other.horizon_ &&
           attacker_ == other.attacker_ && victim_ == other.victim_;
  }

 private:
  template <typename T>
  static void insert_sorted(std::vector<T>& v, T value) {
    auto it = std::lower_bound(v.begin(), v.end(), value);
    if (it == v.end() || *it != value) v.insert(it, value);
  }

  std::map<NodeId, RouterNode> routers_;
  std::map<NodeId, HostNode> hosts_;
  std::map<NodeId, std::vector<NodeId>> adjacency_;
  std::set<std::pair<NodeId, NodeId>> links_;
  std::map<AsId, AsInfo> ases_;
  std::map<AsId, std::vector<AsId>> as_adjacency_;
  std::set<std::pair<AsId, AsId>> as_edges_;
  int horizon_ = 2;
  std::optional<NodeId> attacker_;
  std::optional<NodeId> victim_;
};

// SPIE-deployed ASes at exactly `level` AS hops from `origin`. Hops are
// counted over the whole AS graph, so a deployed AS behind one non-deployed
// AS is a two-hop deployed neighbour. Result is sorted ascending.
inline std::vector<AsId> deployment_neighbors(const Topology& topo, AsId origin, int level) {
  require(topo.has_as(origin), "unknown AS " + std::to_string(raw(origin)));
  require(topo.deployed(origin),
          "AS " + std::to_string(raw(origin)) + " is not SPIE-deployed and keeps no deployment data");
  require(level >= 1 && level <= topo.deployment_horizon(),
          "level must lie in [1, deployment_horizon]");
  std::vector<AsId> out;
  for (const auto& [as, d] : topo.as_distances(origin))
    if (d == level && topo.deployed(as)) out.push_back(as);
  return out;
}

struct LinearScenario {
  Topology topology;
  AttackPath path;
};

// Attacker -> R_n -> ... -> R_1 -> victim in a single AS. Node ids: victim 0,
// router R_d has id d, attacker n + 1.
inline LinearScenario build_linear_path(std::size_t hop_count, double marking_probability) {
  require(hop_count >= 1, "hop_count must be >= 1");
  require_probability(marking_probability, "marking_probability");
  LinearScenario s;
  const AsId domain = as_id(1);
  s.topology.add_as(domain, false);
  const NodeId victim = node(0);
  const NodeId attacker = node(static_cast<std::uint32_t>(hop_count + 1));
  s.topology.add_host(victim, domain);
  for (std::size_t d = 1; d <= hop_count; ++d)
    s.topology.add_router({node(static_cast<std::uint32_t>(d)), domain, marking_probability, 0.0, false});
  s.topology.add_host(attacker, domain);
  s.topology.add_link(victim, node(1));
  for (std::size_t d = 1; d < hop_count; ++d)
    s.topology.add_link(node(static_cast<std::uint32_t>(d)), node(static_cast<std::uint32_t>(d + 1)));
  s.topology.add_link(node(static_cast<std::uint32_t>(hop_count)), attacker);
  s.topology.set_attacker(attacker);
  s.topology.set_victim(victim);

  s.path.attacker = attacker;
  s.path.victim = victim;
  for (std::size_t d = hop_count; d >= 1; --d) s.path.routers.push_back(node(static_cast<std::uint32_t>(d)));
  return s;
}

// Ten-AS cross-domain fixture. The attacker (host 1010) sits behind router
// 101 in AS10 and the victim (host 1000) behind router 13 in AS1. The attack
// route is AS10 -> AS3 -> AS2 -> AS1; AS2 and AS8 run no SPIE. Router ids are
// 10 * AS + k. AS4 and AS7 carry three routers each so that the shortest
// router path keeps to the AS2 route.
inline Topology build_ten_as_topology() {
  Topology t;
  for (std::uint32_t a = 1; a <= 10; ++a) t.add_as(as_id(a), a != 2 && a != 8);
  const std::pair<std::uint32_t, std::uint32_t> as_edges[] = {
      {1, 2}, {1, 7}, {2, 3}, {3, 4}, {3, 10}, {4, 5}, {4, 7}, {5, 6}, {6, 9}, {7, 8}, {8, 9}};
  for (auto [a, b] : as_edges) t.add_as_edge(as_id(a), as_id(b));

  const std::pair<std::uint32_t, std::vector<std::uint32_t>> routers[] = {
      {1, {11, 12, 13, 14}}, {2, {21, 22}}, {3, {31, 32, 33}}, {4, {41, 42, 43}},
      {5, {51, 52}},         {6, {61}},     {7, {71, 72, 73}}, {8, {81}},
      {9, {91}},             {10, {101, 102}}};
  for (const auto& [a, ids] : routers)
    for (auto id : ids) t.add_router({node(id), as_id(a), 0.0, 0.0, false});

  t.add_host(node(1000), as_id(1));
  t.add_host(node(1010), as_id(10));

  const std::pair<std::uint32_t, std::uint32_t> links[] = {
      // AS1
      {11, 12}, {12, 13}, {12, 14}, {13, 1000},
      // AS2
      {21, 22},
      // AS3
      {31, 32}, {32, 33},
      // AS4
      {41, 42}, {42, 43},
      // AS5
      {51, 52},
      // AS7
      {71, 72}, {72, 73},
      // AS10
      {101, 102}, {101, 1010},
      // inter-AS
      {22, 11}, {14, 73}, {33, 21}, {31, 102}, {31, 41}, {43, 71}, {42, 51},
      {52, 61}, {61, 91}, {72, 81}, {81, 91}};
  for (auto [a, b] : links) t.add_link(node(a), node(b));

  t.set_attacker(node(1010));
  t.set_victim(node(1000));
  t.set_deployment_horizon(2);
  t.validate();
  return t;
}

}  // namespace tracelab
