// Acceptance checks. `acceptance <k>` runs criterion k, no argument runs
// all of them. One PASS/FAIL line per criterion; exit status 1 on any FAIL.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tracelab/tracelab.hpp"

namespace fs = std::filesystem;
using namespace tracelab;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("tracelab_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = "'" TRACELAB_CLI "' " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string data(const std::string& name) { return std::string(TRACELAB_DATA_DIR) + "/" + name; }

// ---------------------------------------------------------------------------

Outcome survival_table() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t N = 100000;
  std::size_t cells = 0;
  for (int i = 1; i <= 9; ++i) {
    const double p = i / 10.0;
    const auto exact = oracle::enumerate_mark_outcomes(p, 6);
    const auto mc = monte_carlo_survival(p, 6, N, 1);
    for (std::size_t d = 1; d <= 6; ++d) {
      ++cells;
      const double got = survival_probability(p, d);
      const double closed = p * std::pow(1.0 - p, static_cast<double>(d - 1));
      o.check(got == closed, "closed form at p=" + fmt(p) + " d=" + std::to_string(d));
      // enumeration sums up to 64 rounded products
      o.check(std::abs(got - exact[d]) <= 64 * 6 * std::numeric_limits<double>::epsilon(),
              "enumeration at p=" + fmt(p) + " d=" + std::to_string(d));
      const double se = std::sqrt(got * (1 - got) / static_cast<double>(N));
      o.check(std::abs(mc[d - 1] - got) <= 3 * se,
              "monte carlo at p=" + fmt(p) + " d=" + std::to_string(d) + ": " + fmt(mc[d - 1]) + " vs " + fmt(got));
    }
  }
  const double secs = seconds_since(t0);
  o.check(secs < 10.0, "runtime " + fmt(secs) + " s");
  o.note(std::to_string(cells) + " cells, " + fmt(secs, 3) + " s");
  return o;
}

Outcome threshold_table() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double prev = 2.0;
  for (std::size_t n = 1; n <= 25; ++n) {
    const double got = threshold_marking_probability(n, 0.99);
    const double ref = -std::expm1(std::log(0.01) / static_cast<double>(n));
    o.check(std::abs(got - ref) <= 4 * std::numeric_limits<double>::epsilon(), "p*(" + std::to_string(n) + ")");
    o.check(got < prev, "strict decrease at n=" + std::to_string(n));
    prev = got;
  }
  o.check(std::abs(threshold_marking_probability(1) - 0.99) <= 1e-15, "p*(1) = 0.99");
  o.check(std::abs(threshold_marking_probability(2) - 0.9) <= 1e-15, "p*(2) = 0.9");
  const double secs = seconds_since(t0);
  o.check(secs < 1.0, "runtime " + fmt(secs) + " s");
  o.note("p*(25) = " + fmt(threshold_marking_probability(25)));
  return o;
}

Outcome convergence_trends() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  SweepConfig cfg;
  cfg.hop_counts = {3, 6, 9, 12, 15, 18};
  cfg.p_grid = {0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5};
  cfg.trials = 500;
  cfg.confidence = 0.95;
  cfg.max_packets = kDefaultMaxPackets;
  cfg.base_seed = 1;
  const auto sweep = convergence_sweep(cfg);

  std::map<std::size_t, std::vector<SweepSummary>> by_n;
  for (const auto& s : sweep) by_n[s.hop_count].push_back(s);

  double prev_min = 0.0;
  double prev_arg = 1.0;
  for (auto& [n, cells] : by_n) {
    std::ostringstream row;
    row << "n=" << n << ":";
    for (const auto& c : cells)
      row << ' ' << format_double(c.p) << "->" << (c.converged ? fmt(c.mean, 5) : "none")
          << (c.exhausted ? "(" + std::to_string(c.exhausted) + " exh)" : "");
    o.note(row.str());

    const double arg = optimal_marking_probability(cells, n);
    double best = 0;
    for (const auto& c : cells)
      if (c.p == arg) best = c.mean;
    // A cell whose every trial hit the cutoff has a true mean of at least
    // max_packets, far above any converged minimum.
    auto exceeds = [&](const SweepSummary& c) { return c.converged == 0 || c.mean >= 1.2 * best; };
    const auto& lo = cells.front();
    const auto& hi = cells.back();
    o.check(exceeds(lo), "U-shape n=" + std::to_string(n) + ": p=" + format_double(lo.p) + " mean " + fmt(lo.mean) +
                             " vs 1.2 x min " + fmt(1.2 * best));
    o.check(exceeds(hi), "U-shape n=" + std::to_string(n) + ": p=" + format_double(hi.p) + " mean " + fmt(hi.mean) +
                             " vs 1.2 x min " + fmt(1.2 * best) + " (min at p=" + format_double(arg) + ")");
    o.check(best > prev_min, "minimum mean increases at n=" + std::to_string(n));
    o.check(arg <= prev_arg, "argmin p non-increasing at n=" + std::to_string(n));
    o.note("n=" + std::to_string(n) + " min " + fmt(best) + " at p=" + format_double(arg));
    prev_min = best;
    prev_arg = arg;
  }
  const double secs = seconds_since(t0);
  o.check(secs < 600.0, "runtime " + fmt(secs) + " s");
  o.note(fmt(secs, 3) + " s");
  return o;
}

Outcome convergence_oracles() {
  Outcome o;
  SweepConfig cfg;
  cfg.hop_counts = {1};
  cfg.p_grid = {0.1, 0.5, 0.9};
  cfg.trials = 500;
  cfg.base_seed = 1;
  for (const auto& s : convergence_sweep(cfg)) {
    const double truth = 1.0 / s.p;
    o.check(s.ci_low <= truth && truth <= s.ci_high, "n=1 p=" + format_double(s.p) + ": 1/p=" + fmt(truth) +
                                                         " outside [" + fmt(s.ci_low) + ", " + fmt(s.ci_high) + "]");
  }
  cfg.hop_counts = {2};
  cfg.p_grid = {0.3, 0.5, 0.7};
  cfg.trials = 100000;
  for (const auto& s : convergence_sweep(cfg)) {
    const double expected = oracle::two_hop_expected_convergence(s.p, cfg.max_packets);
    const double rel = std::abs(s.mean - expected) / expected;
    o.check(s.exhausted == 0 && rel < 0.02, "n=2 p=" + format_double(s.p) + ": " + fmt(s.mean) + " vs " + fmt(expected));
    o.note("n=2 p=" + format_double(s.p) + " mc " + fmt(s.mean) + " dp " + fmt(expected) + " rel " + fmt(rel, 3));
  }
  return o;
}

Outcome ten_as_transcript() {
  Outcome o;
  const auto a = scratch() / "ten_as_a.txt";
  const auto b = scratch() / "ten_as_b.txt";
  o.check(run_cli("spie-trace --topology " + data("ten_as.topo") + " --seed 1 --out " + a.string()) == 0, "run 1");
  o.check(run_cli("spie-trace --topology " + data("ten_as.topo") + " --seed 1 --out " + b.string()) == 0, "run 2");
  const auto text = slurp(a);
  o.check(text == slurp(b), "byte-identical runs");
  o.check(text == slurp(data("ten_as.golden")), "matches the stored golden file");

  std::vector<std::string> events;
  std::string graft;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("QUERY", 0) == 0 || line.rfind("POS", 0) == 0 || line.rfind("NEG", 0) == 0) events.push_back(line);
    if (line.rfind("GRAFT", 0) == 0) graft = line;
  }
  auto find = [&](const std::string& prefix) -> long {
    for (std::size_t i = 0; i < events.size(); ++i)
      if (events[i].rfind(prefix, 0) == 0) return static_cast<long>(i);
    return -1;
  };
  const long neg7 = find("NEG 7"), pos3 = find("POS 3 "), neg4 = find("NEG 4"), pos10 = find("POS 10 ");
  o.check(neg7 >= 0 && pos3 > neg7 && neg4 > pos3 && pos10 > neg4, "event order AS7-, AS3+, AS4-, AS10+");
  if (pos3 >= 0) {
    o.check(events[pos3].find(" one_hop=4,10 ") != std::string::npos, "AS3 one-hop set {4, 10}");
    o.check(events[pos3].find(" two_hop=5,7") != std::string::npos, "AS3 two-hop set {5, 7}");
  }
  if (pos10 >= 0) o.check(events[pos10].find(" origin") != std::string::npos, "AS10 flags the origin");
  std::size_t replies = 0, queries = 0;
  for (const auto& e : events) (e.rfind("QUERY", 0) == 0 ? queries : replies)++;
  o.check(queries == replies, "every query answered");
  o.check(graft.find("as=10,3,?,1 ") != std::string::npos, "graft AS10 -> AS3 -> gap -> AS1: " + graft);
  return o;
}

Outcome bloom_behaviour() {
  Outcome o;
  {
    DigestStore store;
    std::vector<PacketDigest> in;
    for (std::uint32_t i = 0; i < 100000; ++i) {
      in.push_back(digest(make_packet(node(i % 5000), node(1000000 + i / 5000), i, kAttackFlowTag)));
      store.insert(in.back());
    }
    std::size_t misses = 0;
    for (auto d : in) misses += !store.contains(d);
    o.check(misses == 0, std::to_string(misses) + " false negatives");
  }
  const std::size_t m = 1 << 16;
  const unsigned k = 4;
  const std::uint32_t n = 4000;
  DigestStore store(m, k);
  std::set<std::uint32_t> in;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto d = digest(make_packet(node(1), node(2), i, kAttackFlowTag));
    store.insert(d);
    in.insert(d.value);
  }
  std::uint64_t queries = 0, fp = 0;
  for (std::uint32_t i = 0; queries < 1'000'000; ++i) {
    auto d = digest(make_packet(node(3), node(4), i, kBenignFlowTag));
    if (in.contains(d.value)) continue;
    ++queries;
    fp += store.contains(d);
  }
  const double expected = oracle::bloom_false_positive(m, k, n);
  const double measured = static_cast<double>(fp) / static_cast<double>(queries);
  o.check(std::abs(measured - expected) <= 0.3 * expected, "fp rate " + fmt(measured) + " vs " + fmt(expected));
  o.note("fp " + fmt(measured) + " expected " + fmt(expected));
  return o;
}

// Random connected single-AS router graph with hosts on some routers.
struct RandomNet {
  Topology topo;
  std::vector<NodeId> hosts;
};

RandomNet random_net(Rng& rng, std::uint32_t min_routers, std::uint32_t max_routers) {
  RandomNet net;
  Topology& t = net.topo;
  t.add_as(as_id(1), false);
  const auto n = min_routers + static_cast<std::uint32_t>(rng.below(max_routers - min_routers + 1));
  for (std::uint32_t r = 1; r <= n; ++r) t.add_router({node(r), as_id(1)});
  for (std::uint32_t r = 2; r <= n; ++r) t.add_link(node(r), node(1 + static_cast<std::uint32_t>(rng.below(r - 1))));
  for (std::uint32_t e = 0; e < n / 3; ++e) {
    auto a = 1 + static_cast<std::uint32_t>(rng.below(n));
    auto b = 1 + static_cast<std::uint32_t>(rng.below(n));
    if (a != b) t.add_link(node(a), node(b));
  }
  for (std::uint32_t r = 1; r <= n; ++r) {
    if (!rng.bernoulli(0.5)) continue;
    const NodeId h = node(1000 + r);
    t.add_host(h, as_id(1));
    t.add_link(h, node(r));
    net.hosts.push_back(h);
  }
  while (net.hosts.size() < 2) {
    const auto r = 1 + static_cast<std::uint32_t>(rng.below(n));
    const NodeId h = node(1000 + r);
    if (t.has_node(h)) continue;
    t.add_host(h, as_id(1));
    t.add_link(h, node(r));
    net.hosts.push_back(h);
  }
  return net;
}

Outcome itrace_sampling() {
  Outcome o;
  {
    auto s = build_linear_path(10, 0.0);
    const double q = 5e-5;
    const std::uint64_t packets = 1'000'000;
    Rng rng(1);
    std::map<NodeId, std::uint64_t> per;
    for (const auto& m : itrace_episode(s.topology, s.path, packets, rng, q)) ++per[m.emitting_router];
    const double mean = q * static_cast<double>(packets);
    const double sigma = std::sqrt(mean * (1 - q));
    for (NodeId r : s.path.routers)
      o.check(std::abs(static_cast<double>(per[r]) - mean) <= 3 * sigma,
              "router " + std::to_string(raw(r)) + " sent " + std::to_string(per[r]) + " messages");
  }
  int recovered = 0;
  const int scenarios = 100;
  for (int i = 0; i < scenarios; ++i) {
    Rng rng(derive_seed(7, {static_cast<std::uint64_t>(i)}));
    auto net = random_net(rng, 8, 24);
    NodeId a = net.hosts[rng.below(net.hosts.size())];
    NodeId v = a;
    while (v == a) v = net.hosts[rng.below(net.hosts.size())];
    const auto path = net.topo.path_between(a, v);
    const double q = 5e-5;
    const auto packets = static_cast<std::uint64_t>(std::ceil(10.0 / q));  // 10x one expected message
    auto msgs = itrace_episode(net.topo, path, packets, rng, q);
    std::set<NodeId> all;
    for (const auto& [id, r] : net.topo.routers()) all.insert(id);
    const auto rec = itrace_reconstruct(msgs, net.topo, all, v);
    if (!rec.candidates.empty() && rec.candidates.front().routers == path.victim_first()) ++recovered;
  }
  o.check(recovered >= 99, std::to_string(recovered) + "/100 paths recovered");
  o.note(std::to_string(recovered) + "/" + std::to_string(scenarios) + " full-deployment paths recovered");
  return o;
}

Outcome input_debugging_ground_truth() {
  Outcome o;
  int exact = 0, bounded = 0, ended = 0;
  const int scenarios = 50;
  for (int i = 0; i < scenarios; ++i) {
    Rng rng(derive_seed(8, {static_cast<std::uint64_t>(i)}));
    auto net = random_net(rng, 6, 30);
    const NodeId attacker = net.hosts[rng.below(net.hosts.size())];
    NodeId victim = attacker;
    while (victim == attacker) victim = net.hosts[rng.below(net.hosts.size())];
    std::vector<FlowSpec> flows{{attacker, victim, 0.5 + rng.uniform(), true}};
    for (int f = 0; f < 6; ++f) {
      NodeId x = net.hosts[rng.below(net.hosts.size())];
      NodeId y = rng.bernoulli(0.5) ? victim : net.hosts[rng.below(net.hosts.size())];
      if (x != y) flows.push_back({x, y, 5.0 * rng.uniform() + 0.1, false});
    }
    const auto truth = net.topo.path_between(attacker, victim).victim_first();
    const auto sig = AttackSignature::for_destination_and_tag(victim, kAttackFlowTag);

    {
      Traffic traffic(net.topo, flows);
      const auto r = input_debugging(traffic, victim, sig, FlowState{});
      exact += r.paths.size() == 1 && r.paths[0] == truth && r.origin == attacker;
    }

    if (truth.size() >= 2) {
      // Hand everything from path position k onwards to a second operator.
      const std::size_t k = 1 + rng.below(truth.size() - 1);
      std::set<NodeId> foreign(truth.begin() + static_cast<std::ptrdiff_t>(k), truth.end());
      Topology split;
      split.add_as(as_id(1), false);
      split.add_as(as_id(2), false);
      split.add_as_edge(as_id(1), as_id(2));
      for (const auto& [id, r] : net.topo.routers())
        split.add_router({id, foreign.contains(id) ? as_id(2) : as_id(1), 0.0, 0.0, false});
      for (const auto& [id, h] : net.topo.hosts()) {
        const NodeId access = net.topo.neighbors(id).front();
        split.add_host(id, foreign.contains(access) ? as_id(2) : as_id(1));
      }
      for (const auto& [x, y] : net.topo.links()) split.add_link(x, y);
      Traffic traffic(split, flows);
      const auto r = input_debugging(traffic, victim, sig, FlowState{});
      const std::vector<NodeId> expect(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(k));
      bounded += r.paths.size() == 1 && r.paths[0] == expect && r.boundary == truth[k] && !r.origin;
    } else {
      ++bounded;  // single-router path: no boundary to insert
    }

    {
      Traffic traffic(net.topo, flows);
      FlowState dead;
      dead.live = false;
      try {
        input_debugging(traffic, victim, sig, dead);
      } catch (const Error& e) {
        ended += e.code() == ErrorCode::AttackEnded;
      }
    }
  }
  o.check(exact == scenarios, std::to_string(exact) + "/50 exact paths");
  o.check(bounded == scenarios, std::to_string(bounded) + "/50 boundary-marked partial paths");
  o.check(ended == scenarios, std::to_string(ended) + "/50 AttackEnded on dead flows");
  o.note(std::to_string(exact) + " exact, " + std::to_string(bounded) + " bounded, " + std::to_string(ended) +
         " ended");
  return o;
}

Outcome determinism() {
  Outcome o;
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"mark-prob -p 0.3 --seed 5", {}},
      {"threshold --n-max 25", {}},
      {"convergence --hops 3,6 --p-grid 0.1,0.3,0.5 --trials 100 --seed 5", {".long.csv"}},
      {"spie-trace --topology " + data("ten_as.topo") + " --seed 5", {}},
      {"strategy input-debugging --topology " + data("input_debugging.topo") + " --seed 5", {}},
      {"strategy controlled-flooding --topology " + data("controlled_flooding.topo") + " --seed 5", {}},
      {"strategy itrace --topology " + data("itrace.topo") + " --seed 5", {}},
  };
  int i = 0;
  for (const auto& [args, companions] : cases) {
    const auto a = scratch() / ("det_a" + std::to_string(i) + ".out");
    const auto b = scratch() / ("det_b" + std::to_string(i) + ".out");
    ++i;
    const bool ran = run_cli(args + " --out " + a.string()) == 0 && run_cli(args + " --out " + b.string()) == 0;
    o.check(ran, "ran: " + args);
    o.check(ran && slurp(a) == slurp(b), "identical: " + args);
    for (const auto& ext : companions) {
      auto ca = a, cb = b;
      ca.replace_extension();
      cb.replace_extension();
      ca += ext;
      cb += ext;
      o.check(slurp(ca) == slurp(cb) && !slurp(ca).empty(), "identical companion: " + args);
    }
  }
  o.note(std::to_string(cases.size()) + " subcommand runs compared");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"survival probability table", survival_table},
      {"threshold marking probability table", threshold_table},
      {"convergence trends over hop count and p", convergence_trends},
      {"convergence oracles (n=1 geometric, n=2 dynamic program)", convergence_oracles},
      {"ten-AS cross-domain traceback transcript", ten_as_transcript},
      {"digest store false negatives and false positives", bloom_behaviour},
      {"iTrace sampling and full-deployment reconstruction", itrace_sampling},
      {"input debugging on ground-truth scenarios", input_debugging_ground_truth},
      {"byte-identical outputs for a fixed seed", determinism},
  };
  std::vector<std::size_t> which;
  if (argc > 1) {
    for (int a = 1; a < argc; ++a) {
      const int k = std::atoi(argv[a]);
      if (k < 1 || k > static_cast<int>(criteria.size())) {
        std::cerr << "usage: acceptance [1-" << criteria.size() << "]...\n";
        return 2;
      }
      which.push_back(static_cast<std::size_t>(k));
    }
  } else {
    for (std::size_t k = 1; k <= criteria.size(); ++k) which.push_back(k);
  }
  bool all = true;
  for (std::size_t k : which) {
    Outcome out;
    try {
      out = criteria[k - 1].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.note(std::string("exception: ") + e.what());
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << k << ": " << criteria[k - 1].first << '\n';
    for (const auto& n : out.notes) std::cout << "    " << n << '\n';
    std::cout.flush();
    all = all && out.pass;
  }
  fs::remove_all(scratch());
  return all ? 0 : 1;
}
