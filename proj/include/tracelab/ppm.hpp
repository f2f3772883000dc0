#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "tracelab/core.hpp"
#include "tracelab/packet.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/topology.hpp"

namespace tracelab {

struct PpmParams {
  double marking_probability = 0.0;
  double confidence_target = 0.99;

  void validate() const {
    require_probability(marking_probability, "marking_probability");
    require(confidence_target > 0.0 && confidence_target < 1.0, "confidence_target must lie in (0,1)");
  }
};

// A packet as seen by the victim. node_field is the single address slot;
// a later mark always replaces an earlier one.
struct MarkedPacket {
  std::optional<NodeId> node_field;
  PacketBytes identity{};
  std::uint64_t sequence = 0;
};

// Sends one packet from the attacker down the path. Routers are visited
// R_n, ..., R_1 and each overwrites the node field with probability p.
inline MarkedPacket forward_and_mark(const AttackPath& path, double p, Rng& rng, std::uint64_t sequence = 0) {
  require_probability(p, "marking probability");
  MarkedPacket pkt;
  pkt.sequence = sequence;
  pkt.identity = make_packet(path.attacker, path.victim, static_cast<std::uint32_t>(sequence));
  for (NodeId r : path.routers) {
    if (rng.bernoulli(p)) pkt.node_field = r;
    forward_hop(pkt.identity);
  }
  return pkt;
}

// Distance of the surviving mark for one packet on an n-hop path with
// uniform probability p, or 0 for an unmarked packet. Draws the distance
// of the marking router closest to the victim directly by geometric
// inversion, which has the same law as forward_and_mark at O(1) cost.
inline std::size_t sample_mark_distance(double p, std::size_t hops, Rng& rng) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return 1;
  const double u = rng.uniform();
  const double d = 1.0 + std::floor(std::log(u) / std::log1p(-p));
  return d > static_cast<double>(hops) ? 0 : static_cast<std::size_t>(d);
}

// Probability that the victim receives a packet whose surviving mark was
// written d hops away: p (1 - p)^(d - 1).
inline double survival_probability(double p, std::size_t d) {
  require_probability(p, "marking probability");
  require(d >= 1, "distance must be >= 1");
  return p * std::pow(1.0 - p, static_cast<double>(d - 1));
}

struct SurvivalPoint {
  std::size_t distance;
  double probability;
};

inline std::vector<SurvivalPoint> survival_curve(double p, std::size_t max_d) {
  require(max_d >= 1, "max_d must be >= 1");
  std::vector<SurvivalPoint> out;
  out.reserve(max_d);
  for (std::size_t d = 1; d <= max_d; ++d) out.push_back({d, survival_probability(p, d)});
  return out;
}

// Smallest uniform p with 1 - (1 - p)^n >= confidence.
inline double threshold_marking_probability(std::size_t n, double confidence = 0.99) {
  require(n >= 1, "hop count must be >= 1");
  require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0,1)");
  return 1.0 - std::pow(1.0 - confidence, 1.0 / static_cast<double>(n));
}

// Victim-side mark counts. sum(counts) + unmarked == total_packets.
class MarkTally {
 public:
  void add(const MarkedPacket& pkt) { add(pkt.node_field); }

  void add(std::optional<NodeId> mark) {
    ++total_;
    if (mark) {
      ++counts_[*mark];
    } else {
      ++unmarked_;
    }
  }

  void merge(const MarkTally& other) {
    for (const auto& [id, c] : other.counts_) counts_[id] += c;
    total_ += other.total_;
    unmarked_ += other.unmarked_;
  }

  std::uint64_t count(NodeId id) const {
    auto it = counts_.find(id);
    return it == counts_.end() ? 0 : it->second;
  }

  const std::map<NodeId, std::uint64_t>& counts() const noexcept { return counts_; }
  std::uint64_t total_packets() const noexcept { return total_; }
  std::uint64_t unmarked() const noexcept { return unmarked_; }

  bool operator==(const MarkTally&) const = default;

 private:
  std::map<NodeId, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  std::uint64_t unmarked_ = 0;
};

template <typename Range>
MarkTally tally(const Range& packets) {
  MarkTally t;
  for (const MarkedPacket& p : packets) t.add(p);
  return t;
}

// Orders routers by strictly descending mark count, victim-adjacent first.
// Refuses to break ties. If expected_hops is given and fewer distinct
// routers were seen, the evidence is incomplete.
inline std::vector<NodeId> reconstruct_path(const MarkTally& t, std::optional<std::size_t> expected_hops = {}) {
  if (expected_hops && *expected_hops > t.counts().size()) {
    throw Error(ErrorCode::IncompleteEvidence, "expected " + std::to_string(*expected_hops) +
                                                   " routers but only " + std::to_string(t.counts().size()) +
                                                   " left marks");
  }
  std::vector<std::pair<std::uint64_t, NodeId>> ranked;
  for (const auto& [id, c] : t.counts()) ranked.emplace_back(c, id);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    if (ranked[i].first == ranked[i - 1].first) {
      throw Error(ErrorCode::AmbiguousOrder, "routers " + std::to_string(raw(ranked[i - 1].second)) + " and " +
                                                 std::to_string(raw(ranked[i].second)) + " share count " +
                                                 std::to_string(ranked[i].first));
    }
  }
  std::vector<NodeId> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back(r.second);
  return out;
}

}  // namespace tracelab
