#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tracelab/core.hpp"
#include "tracelab/ppm.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/topology.hpp"

namespace tracelab {

// (i) every router left at least one surviving mark, (ii) counts strictly
// decrease with distance from the victim. For n = 1, (ii) is vacuous.
struct ConvergenceCriteria {
  std::size_t hop_count = 1;
  bool require_all_routers = true;
  bool require_strict_order = true;
};

struct ConvergenceResult {
  std::optional<std::uint64_t> packets_to_converge;  // nullopt: exhausted
  std::uint64_t trial_seed = 0;

  bool exhausted() const noexcept { return !packets_to_converge.has_value(); }
};

// Running check of the convergence conditions. Each observation updates
// O(1) state: the number of routers still without a mark and the number of
// adjacent pairs (d, d+1) with count[d] <= count[d+1].
class ConvergenceTracker {
 public:
  explicit ConvergenceTracker(const ConvergenceCriteria& c)
      : criteria_(c), counts_(c.hop_count + 2, 0), missing_(c.hop_count),
        disorder_(c.hop_count > 0 ? c.hop_count - 1 : 0) {
    require(c.hop_count >= 1, "hop_count must be >= 1");
  }

  // distance 0 means the packet arrived unmarked.
  void observe(std::size_t distance) {
    if (distance == 0) return;
    require(distance <= criteria_.hop_count, "mark distance beyond the path");
    const std::size_t n = criteria_.hop_count;
    auto bad = [&](std::size_t d) { return counts_[d] <= counts_[d + 1] ? 1 : 0; };
    long before = 0;
    if (distance > 1) before += bad(distance - 1);
    if (distance < n) before += bad(distance);
    if (counts_[distance] == 0) --missing_;
    ++counts_[distance];
    long after = 0;
    if (distance > 1) after += bad(distance - 1);
    if (distance < n) after += bad(distance);
    disorder_ = static_cast<std::size_t>(static_cast<long>(disorder_) + after - before);
  }

  bool converged() const noexcept {
    return (!criteria_.require_all_routers || missing_ == 0) &&
           (!criteria_.require_strict_order || disorder_ == 0);
  }

  std::uint64_t count(std::size_t distance) const { return counts_.at(distance); }

 private:
  ConvergenceCriteria criteria_;
  std::vector<std::uint64_t> counts_;
  std::size_t missing_;
  std::size_t disorder_;
};

inline constexpr std::uint64_t kDefaultMaxPackets = 1'000'000;

// Packets are drawn one at a time with the uniform marking probability p
// until the criteria hold or max_packets have been sent.
inline ConvergenceResult convergence_trial(std::size_t hop_count, double p, Rng& rng, std::uint64_t max_packets,
                                           const ConvergenceCriteria* criteria = nullptr) {
  require_probability(p, "marking probability");
  require(max_packets >= 1, "max_packets must be >= 1");
  ConvergenceCriteria c = criteria ? *criteria : ConvergenceCriteria{hop_count, true, true};
  c.hop_count = hop_count;
  ConvergenceTracker tracker(c);
  ConvergenceResult result;
  result.trial_seed = rng.seed();
  for (std::uint64_t k = 1; k <= max_packets; ++k) {
    tracker.observe(sample_mark_distance(p, hop_count, rng));
    if (tracker.converged()) {
      result.packets_to_converge = k;
      return result;
    }
  }
  return result;
}

inline ConvergenceResult convergence_trial(const AttackPath& path, double p, Rng& rng, std::uint64_t max_packets) {
  require(path.hop_count() >= 1, "attack path has no routers");
  return convergence_trial(path.hop_count(), p, rng, max_packets);
}

struct SweepConfig {
  std::vector<std::size_t> hop_counts;
  std::vector<double> p_grid;
  std::size_t trials = 500;
  double confidence = 0.95;
  std::uint64_t max_packets = kDefaultMaxPackets;
  std::uint64_t base_seed = 1;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct SweepSummary {
  std::size_t hop_count = 0;
  double p = 0.0;
  std::size_t trials = 0;
  std::size_t converged = 0;
  std::size_t exhausted = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double ci_low = std::numeric_limits<double>::quiet_NaN();
  double ci_high = std::numeric_limits<double>::quiet_NaN();
  double confidence = 0.95;

  // More than 1% of trials hit max_packets; the mean is biased low.
  bool exhaustion_warning() const noexcept { return exhausted * 100 > trials; }
};

struct MeanInterval {
  double mean;
  double low;
  double high;
};

// Two-sided Student-t interval for the mean. Needs at least two samples.
inline MeanInterval student_t_interval(const std::vector<double>& xs, double confidence) {
  require(xs.size() >= 2, "need at least two samples for an interval");
  require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0,1)");
  long double sum = 0;
  for (double x : xs) sum += x;
  const double mean = static_cast<double>(sum / static_cast<long double>(xs.size()));
  long double ss = 0;
  for (double x : xs) ss += (x - mean) * static_cast<long double>(x - mean);
  const double sd = std::sqrt(static_cast<double>(ss / static_cast<long double>(xs.size() - 1)));
  boost::math::students_t dist(static_cast<double>(xs.size() - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
  const double half = t * sd / std::sqrt(static_cast<double>(xs.size()));
  return {mean, mean - half, mean + half};
}

inline std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t hop_count, double p, std::size_t trial) {
  return derive_seed(base_seed, {hop_count, std::bit_cast<std::uint64_t>(p), trial});
}

inline SweepSummary summarize_cell(std::size_t hop_count, double p, const std::vector<ConvergenceResult>& results,
                                   double confidence) {
  SweepSummary s;
  s.hop_count = hop_count;
  s.p = p;
  s.trials = results.size();
  s.confidence = confidence;
  std::vector<double> times;
  for (const auto& r : results) {
    if (r.exhausted()) {
      ++s.exhausted;
    } else {
      times.push_back(static_cast<double>(*r.packets_to_converge));
    }
  }
  s.converged = times.size();
  if (times.size() >= 2) {
    auto ci = student_t_interval(times, confidence);
    s.mean = ci.mean;
    s.ci_low = ci.low;
    s.ci_high = ci.high;
  } else if (times.size() == 1) {
    s.mean = times.front();
  }
  return s;
}

// Runs every (hop_count, p) cell. Trials may execute on several threads but
// each trial owns a stream derived from (base_seed, n, p, t) and results are
// reduced in trial order, so output does not depend on the thread count.
inline std::vector<SweepSummary> convergence_sweep(const SweepConfig& cfg) {
  require(!cfg.hop_counts.empty(), "hop_counts grid is empty");
  require(!cfg.p_grid.empty(), "p grid is empty");
  require(cfg.trials >= 2, "trials must be >= 2");
  require(cfg.confidence > 0.0 && cfg.confidence < 1.0, "confidence must lie in (0,1)");
  require(cfg.max_packets >= 1, "max_packets must be >= 1");
  for (auto n : cfg.hop_counts) require(n >= 1, "hop counts must be >= 1");
  for (double p : cfg.p_grid) require(p > 0.0 && p < 1.0, "p grid values must lie in (0,1)");

  const std::size_t cells = cfg.hop_counts.size() * cfg.p_grid.size();
  const std::size_t jobs = cells * cfg.trials;
  std::vector<ConvergenceResult> results(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t cell = j / cfg.trials;
      const std::size_t t = j % cfg.trials;
      const std::size_t n = cfg.hop_counts[cell / cfg.p_grid.size()];
      const double p = cfg.p_grid[cell % cfg.p_grid.size()];
      Rng rng(trial_seed(cfg.base_seed, n, p, t));
      results[j] = convergence_trial(n, p, rng, cfg.max_packets);
    }
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  std::vector<SweepSummary> out;
  out.reserve(cells);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::vector<ConvergenceResult> slice(results.begin() + static_cast<std::ptrdiff_t>(cell * cfg.trials),
                                         results.begin() + static_cast<std::ptrdiff_t>((cell + 1) * cfg.trials));
    out.push_back(summarize_cell(cfg.hop_counts[cell / cfg.p_grid.size()], cfg.p_grid[cell % cfg.p_grid.size()],
                                 slice, cfg.confidence));
  }
  return out;
}

// Grid p with the lowest mean convergence time for hop count n. Ties go to
// the smaller p. Cells without a converged trial are skipped.
inline double optimal_marking_probability(const std::vector<SweepSummary>& sweep, std::size_t hop_count) {
  const SweepSummary* best = nullptr;
  for (const auto& s : sweep) {
    if (s.hop_count != hop_count || s.converged == 0) continue;
    if (!best || s.mean < best->mean || (s.mean == best->mean && s.p < best->p)) best = &s;
  }
  if (!best) {
    throw Error(ErrorCode::NoConvergedTrials, "no converged trials for hop count " + std::to_string(hop_count));
  }
  return best->p;
}

}  // namespace tracelab
