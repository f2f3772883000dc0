#pragma once

// Hash-based single-packet traceback.
//
// Digest: copy the 28 identity bytes, zero the hop-mutable header fields
// (type of service at offset 1, TTL at offset 8, header checksum at
// offsets 10-11), then take 32-bit FNV-1a (offset basis 0x811c9dc5, prime
// 0x01000193) over the 28 masked bytes.
//
// Bloom positions for digest d in an m-bit store with k hashes:
//   h1 = mix64(d), h2 = mix64(d ^ 0x5bd1e9955bd1e995) | 1,
//   position_i = (h1 + i * h2) mod m,  i = 0..k-1
// where mix64 is the SplitMix64 finalizer in rng.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tracelab/core.hpp"
#include "tracelab/packet.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/topology.hpp"

namespace tracelab {

struct PacketDigest {
  std::uint32_t value = 0;

  auto operator<=>(const PacketDigest&) const = default;
};

inline std::string to_hex(PacketDigest d) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", d.value);
  return buf;
}

inline PacketDigest digest(std::span<const std::uint8_t> identity) {
  if (identity.size() != kIdentityBytes) {
    throw Error(ErrorCode::InvalidArgument,
                "digest input must be 28 bytes, got " + std::to_string(identity.size()));
  }
  PacketBytes masked{};
  std::copy(identity.begin(), identity.end(), masked.begin());
  masked[ipv4::kTos] = 0;
  masked[ipv4::kTtl] = 0;
  masked[ipv4::kChecksum] = 0;
  masked[ipv4::kChecksum + 1] = 0;
  std::uint32_t h = 0x811c9dc5u;
  for (std::uint8_t b : masked) {
    h ^= b;
    h *= 0x01000193u;
  }
  return {h};
}

// Bloom filter over packet digests. No false negatives.
class DigestStore {
 public:
  static constexpr std::size_t kDefaultBits = std::size_t{1} << 20;
  static constexpr unsigned kDefaultHashes = 3;

  explicit DigestStore(std::size_t bits = kDefaultBits, unsigned hash_count = kDefaultHashes)
      : bits_(bits), hashes_(hash_count) {
    require(bits >= 8, "digest store needs at least 8 bits");
    require(hash_count >= 1, "digest store needs at least one hash");
    words_.assign((bits + 63) / 64, 0);
  }

  void insert(PacketDigest d) {
    for_each_position(d, [&](std::size_t pos) { words_[pos / 64] |= std::uint64_t{1} << (pos % 64); });
    ++inserted_;
  }

  bool contains(PacketDigest d) const {
    bool all = true;
    for_each_position(d, [&](std::size_t pos) { all = all && ((words_[pos / 64] >> (pos % 64)) & 1u); });
    return all;
  }

  std::size_t bit_count() const noexcept { return bits_; }
  unsigned hash_count() const noexcept { return hashes_; }
  std::uint64_t inserted_count() const noexcept { return inserted_; }

  // (1 - e^(-k n / m))^k
  static double expected_false_positive_rate(std::size_t bits, unsigned hashes, std::uint64_t inserted) {
    const double k = hashes;
    return std::pow(1.0 - std::exp(-k * static_cast<double>(inserted) / static_cast<double>(bits)), k);
  }

 private:
  template <typename F>
  void for_each_position(PacketDigest d, F&& f) const {
    const std::uint64_t h1 = mix64(d.value);
    const std::uint64_t h2 = mix64(d.value ^ 0x5bd1e9955bd1e995ULL) | 1u;
    for (unsigned i = 0; i < hashes_; ++i) f(static_cast<std::size_t>((h1 + i * h2) % bits_));
  }

  std::size_t bits_;
  unsigned hashes_;
  std::vector<std::uint64_t> words_;
  std::uint64_t inserted_ = 0;
};

// Data generation agent: one per router in a SPIE-deployed AS. Concurrent
// lookups, exclusive inserts.
class DataGenerationAgent {
 public:
  DataGenerationAgent(NodeId router, std::size_t bits, unsigned hashes) : router_(router), store_(bits, hashes) {}

  void record(const PacketBytes& identity) {
    std::unique_lock lock(mu_);
    store_.insert(digest(identity));
  }

  bool saw(PacketDigest d) const {
    std::shared_lock lock(mu_);
    return store_.contains(d);
  }

  NodeId router() const noexcept { return router_; }

 private:
  NodeId router_;
  DigestStore store_;
  mutable std::shared_mutex mu_;
};

enum class TraceStatus { Found, NotSeen, ForkDetected };

// Attack path inside one AS. `routers` is in forwarding order: ingress
// first, the router that handed the packet onward (egress) last.
struct IntraAsPath {
  TraceStatus status = TraceStatus::NotSeen;
  AsId domain{};
  std::vector<NodeId> routers;
  bool origin = false;
  // On ForkDetected, one entry per matching upstream neighbour, each the
  // walk so far extended by that neighbour, forwarding order.
  std::vector<std::vector<NodeId>> branches;

  bool seen() const noexcept { return status != TraceStatus::NotSeen; }
  NodeId ingress() const { return routers.front(); }
  NodeId egress() const { return routers.back(); }
};

// DGAs for every router of every SPIE-deployed AS, one SCAR region per AS,
// and one STM per deployed AS (identified by the AS id).
class TracebackAgents {
 public:
  explicit TracebackAgents(const Topology& topo, std::size_t bloom_bits = DigestStore::kDefaultBits,
                           unsigned bloom_hashes = DigestStore::kDefaultHashes)
      : topo_(&topo) {
    for (const auto& [id, r] : topo.routers()) {
      if (!topo.deployed(r.domain)) continue;
      dgas_.emplace(std::piecewise_construct, std::forward_as_tuple(id),
                    std::forward_as_tuple(id, bloom_bits, bloom_hashes));
      regions_[r.domain].push_back(id);
    }
  }

  const Topology& topology() const noexcept { return *topo_; }

  bool has_dga(NodeId router) const { return dgas_.contains(router); }

  bool dga_saw(NodeId router, PacketDigest d) const {
    auto it = dgas_.find(router);
    return it != dgas_.end() && it->second.saw(d);
  }

  const std::vector<NodeId>& scar_region(AsId domain) const {
    static const std::vector<NodeId> empty;
    auto it = regions_.find(domain);
    return it == regions_.end() ? empty : it->second;
  }

  // Forwarding episode: the packet follows the routed path from src to dst.
  // Every SPIE router digests it on arrival, then applies the per-hop
  // mutation. Returns the routers traversed.
  std::vector<NodeId> forward(NodeId src, NodeId dst, PacketBytes packet) {
    auto nodes = topo_->route(src, dst);
    require(!nodes.empty(), "no route between hosts");
    std::vector<NodeId> traversed;
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
      if (auto it = dgas_.find(nodes[i]); it != dgas_.end()) it->second.record(packet);
      forward_hop(packet);
      traversed.push_back(nodes[i]);
    }
    return traversed;
  }

 private:
  const Topology* topo_;
  std::map<NodeId, DataGenerationAgent> dgas_;
  std::map<AsId, std::vector<NodeId>> regions_;
};

namespace detail {

// Walks upstream from `start` through routers of the same AS whose DGA saw
// the digest. `handed_to` is the node the packet left the AS through (a
// router in the next AS or the victim host).
inline IntraAsPath walk_region(const TracebackAgents& agents, AsId domain, NodeId start, NodeId handed_to,
                               PacketDigest d) {
  const Topology& topo = agents.topology();
  IntraAsPath out;
  out.domain = domain;
  out.status = TraceStatus::Found;
  std::vector<NodeId> walk{start};
  std::set<NodeId> visited{start};
  NodeId cur = start;
  for (;;) {
    std::vector<NodeId> matches;
    for (NodeId n : topo.neighbors(cur)) {
      if (visited.contains(n) || !topo.is_router(n) || topo.router(n).domain != domain) continue;
      if (agents.dga_saw(n, d)) matches.push_back(n);
    }
    if (matches.empty()) break;
    if (matches.size() > 1) {
      out.status = TraceStatus::ForkDetected;
      for (NodeId m : matches) {
        auto branch = walk;
        branch.push_back(m);
        out.branches.emplace_back(branch.rbegin(), branch.rend());
      }
      break;
    }
    cur = matches.front();
    visited.insert(cur);
    walk.push_back(cur);
  }
  // The walk ends at the attacker's access router when that router has no
  // inter-AS link other than the one the packet left through.
  std::size_t other_external = 0;
  for (NodeId x : topo.external_neighbors(cur))
    if (!(cur == start && x == handed_to)) ++other_external;
  out.origin = out.status == TraceStatus::Found && other_external == 0;
  out.routers.assign(walk.rbegin(), walk.rend());
  return out;
}

}  // namespace detail

// SCAR trace inside the victim's AS, starting at the victim's access router.
inline IntraAsPath internal_traceback(const TracebackAgents& agents, NodeId victim_host, PacketDigest d) {
  const Topology& topo = agents.topology();
  require(topo.is_host(victim_host), "victim must be a host");
  const AsId domain = topo.domain_of(victim_host);
  require(topo.deployed(domain), "victim AS is not SPIE-deployed");
  IntraAsPath none;
  none.domain = domain;
  for (NodeId access : topo.neighbors(victim_host)) {
    if (agents.dga_saw(access, d)) return detail::walk_region(agents, domain, access, victim_host, d);
  }
  return none;
}

// SCAR trace inside a remote AS on behalf of `requester`. The egress is the
// matching border router whose outside neighbour is AS-closest to the
// requester (lowest router id on ties).
inline IntraAsPath internal_traceback(const TracebackAgents& agents, AsId domain, AsId requester, PacketDigest d) {
  const Topology& topo = agents.topology();
  require(topo.deployed(domain), "AS " + std::to_string(raw(domain)) + " is not SPIE-deployed");
  const auto dist = topo.as_distances(requester);
  std::optional<NodeId> egress;
  NodeId handed_to{};
  int best = std::numeric_limits<int>::max();
  for (NodeId r : agents.scar_region(domain)) {
    if (!agents.dga_saw(r, d)) continue;
    for (NodeId x : topo.external_neighbors(r)) {
      auto it = dist.find(topo.router(x).domain);
      if (it == dist.end()) continue;
      if (it->second < best) {
        best = it->second;
        egress = r;
        handed_to = x;
      }
    }
  }
  if (!egress) {
    IntraAsPath none;
    none.domain = domain;
    return none;
  }
  return detail::walk_region(agents, domain, *egress, handed_to, d);
}

struct StmReply {
  AsId responder{};
  IntraAsPath trace;
  std::vector<AsId> one_hop;
  std::vector<AsId> two_hop;

  bool positive() const noexcept { return trace.seen(); }
};

// A remote STM answers from its own DGAs and deployment table only; it keeps
// no per-traceback state. The requester is left out of the neighbour sets.
inline StmReply stm_answer(const TracebackAgents& agents, AsId responder, AsId requester, PacketDigest d) {
  StmReply reply;
  reply.responder = responder;
  reply.trace = internal_traceback(agents, responder, requester, d);
  if (reply.positive()) {
    const Topology& topo = agents.topology();
    auto without_requester = [&](std::vector<AsId> v) {
      std::erase(v, requester);
      return v;
    };
    reply.one_hop = without_requester(deployment_neighbors(topo, responder, 1));
    if (topo.deployment_horizon() >= 2) reply.two_hop = without_requester(deployment_neighbors(topo, responder, 2));
  }
  return reply;
}

enum class EventKind { Query, Positive, Negative };

struct TranscriptEvent {
  EventKind kind = EventKind::Query;
  AsId from{};  // Query only
  AsId as{};    // queried AS, or the replier
  PacketDigest digest{};
  std::vector<NodeId> path;
  std::vector<AsId> one_hop;
  std::vector<AsId> two_hop;
  bool origin = false;
  bool fork = false;

  bool operator==(const TranscriptEvent&) const = default;
};

template <typename T>
std::string join_ids(const std::vector<T>& ids, char sep = ',') {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) os << sep;
    os << ids[i];
  }
  return os.str();
}

struct StmQueryTranscript {
  std::vector<TranscriptEvent> events;

  // One event per line:
  //   QUERY <from> <to> <digest-hex>
  //   POS <as> path=<r1,r2,...> one_hop=<...> two_hop=<...> [origin] [fork]
  //   NEG <as>
  // Router paths are in forwarding order.
  std::string to_text() const {
    std::ostringstream os;
    for (const auto& e : events) {
      switch (e.kind) {
        case EventKind::Query:
          os << "QUERY " << e.from << ' ' << e.as << ' ' << to_hex(e.digest) << '\n';
          break;
        case EventKind::Positive:
          os << "POS " << e.as << " path=" << join_ids(e.path) << " one_hop=" << join_ids(e.one_hop)
             << " two_hop=" << join_ids(e.two_hop);
          if (e.origin) os << " origin";
          if (e.fork) os << " fork";
          os << '\n';
          break;
        case EventKind::Negative:
          os << "NEG " << e.as << '\n';
          break;
      }
    }
    return os.str();
  }

  bool operator==(const StmQueryTranscript&) const = default;
};

// End-to-end path in forwarding order. nullopt entries mark a gap of one or
// more ASes that could not be queried (not SPIE-deployed).
struct GraftedPath {
  std::vector<std::optional<AsId>> ases;
  std::vector<std::optional<NodeId>> routers;

  std::string to_text() const {
    auto render = [](const auto& v) {
      std::ostringstream os;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        if (v[i]) {
          os << *v[i];
        } else {
          os << '?';
        }
      }
      return os.str();
    };
    return "GRAFT as=" + render(ases) + " routers=" + render(routers) + "\n";
  }
};

enum class CrossAsStatus { OriginFound, OriginNotFound };

struct CrossAsResult {
  CrossAsStatus status = CrossAsStatus::OriginNotFound;
  IntraAsPath victim_trace;
  std::vector<IntraAsPath> remote_traces;  // positive replies, discovery order
  GraftedPath path;
  StmQueryTranscript transcript;
};

// Traceback driven entirely by the victim's STM. Deployed neighbours are
// queried level by level (one-hop, then two-hop, ascending AS id within a
// level); each batch is answered before the next is issued. Positive
// replies enqueue the replier's one-hop and then two-hop sets. The session
// stops after the batch in which a reply flags the origin.
class CrossAsTraceback {
 public:
  CrossAsTraceback(const TracebackAgents& agents, NodeId victim_host, PacketDigest d)
      : agents_(&agents), digest_(d) {
    const Topology& topo = agents.topology();
    victim_as_ = topo.domain_of(victim_host);
    require(topo.deployed(victim_as_), "victim AS is not SPIE-deployed");
    result_.victim_trace = internal_traceback(agents, victim_host, d);
    queried_.insert(victim_as_);
    if (result_.victim_trace.seen() && result_.victim_trace.origin) {
      finished_ = true;
      return;
    }
    for (int level = 1; level <= topo.deployment_horizon(); ++level)
      pending_.push_back(deployment_neighbors(topo, victim_as_, level));
  }

  bool done() const noexcept { return finished_ || pending_.empty(); }

  // Issues and resolves one batch of queries.
  void step() {
    while (!pending_.empty()) {
      std::vector<AsId> batch;
      for (AsId a : pending_.front())
        if (!queried_.contains(a)) batch.push_back(a);
      pending_.pop_front();
      if (batch.empty()) continue;
      for (AsId a : batch) {
        queried_.insert(a);
        TranscriptEvent q;
        q.kind = EventKind::Query;
        q.from = victim_as_;
        q.as = a;
        q.digest = digest_;
        result_.transcript.events.push_back(q);
      }
      for (AsId a : batch) {
        StmReply reply = stm_answer(*agents_, a, victim_as_, digest_);
        TranscriptEvent e;
        e.as = a;
        if (!reply.positive()) {
          e.kind = EventKind::Negative;
          result_.transcript.events.push_back(e);
          continue;
        }
        e.kind = EventKind::Positive;
        e.path = reply.trace.routers;
        e.one_hop = reply.one_hop;
        e.two_hop = reply.two_hop;
        e.origin = reply.trace.origin;
        e.fork = reply.trace.status == TraceStatus::ForkDetected;
        result_.transcript.events.push_back(e);
        result_.remote_traces.push_back(reply.trace);
        if (reply.trace.origin) finished_ = true;
        pending_.push_back(reply.one_hop);
        pending_.push_back(reply.two_hop);
      }
      return;
    }
  }

  CrossAsResult result() const {
    CrossAsResult r = result_;
    bool origin = r.victim_trace.seen() && r.victim_trace.origin;
    for (const auto& t : r.remote_traces) origin = origin || t.origin;
    r.status = origin ? CrossAsStatus::OriginFound : CrossAsStatus::OriginNotFound;
    r.path = graft(r);
    return r;
  }

 private:
  // Chains segments victim-outward: the next segment is the one whose egress
  // is linked to the current ingress; otherwise the earliest discovered
  // segment follows after a gap.
  GraftedPath graft(const CrossAsResult& r) const {
    const Topology& topo = agents_->topology();
    std::vector<const IntraAsPath*> remaining;
    for (const auto& t : r.remote_traces) remaining.push_back(&t);
    std::vector<std::pair<const IntraAsPath*, bool>> chain;  // segment, gap before it (victim side)
    const IntraAsPath* cur = r.victim_trace.seen() ? &r.victim_trace : nullptr;
    if (cur) chain.emplace_back(cur, false);
    while (!remaining.empty()) {
      auto it = remaining.end();
      if (cur) {
        it = std::find_if(remaining.begin(), remaining.end(),
                          [&](const IntraAsPath* s) { return topo.linked(s->egress(), cur->ingress()); });
      }
      const bool gap = it == remaining.end();
      if (gap) it = remaining.begin();
      chain.emplace_back(*it, gap || cur == nullptr);
      cur = *it;
      remaining.erase(it);
      if (cur->origin) break;
    }
    GraftedPath g;
    for (auto seg = chain.rbegin(); seg != chain.rend(); ++seg) {
      g.ases.push_back(seg->first->domain);
      for (NodeId n : seg->first->routers) g.routers.push_back(n);
      if (seg->second) {
        g.ases.push_back(std::nullopt);
        g.routers.push_back(std::nullopt);
      }
    }
    return g;
  }

  const TracebackAgents* agents_;
  PacketDigest digest_;
  AsId victim_as_{};
  std::set<AsId> queried_;
  std::deque<std::vector<AsId>> pending_;
  bool finished_ = false;
  CrossAsResult result_;
};

inline CrossAsResult cross_as_traceback(const TracebackAgents& agents, NodeId victim_host, PacketDigest d) {
  CrossAsTraceback session(agents, victim_host, d);
  while (!session.done()) session.step();
  return session.result();
}

}  // namespace tracelab
