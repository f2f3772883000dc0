#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "tracelab/ppm.hpp"

using namespace tracelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("survival probability agrees with exhaustive enumeration", "[ppm]") {
  for (double p : {0.05, 0.1, 0.3, 0.5, 0.77, 0.9}) {
    for (std::size_t n = 1; n <= 10; ++n) {
      const auto exact = oracle::enumerate_mark_outcomes(p, n);
      // the oracle sums up to 2^n rounded products
      const double tol = std::ldexp(static_cast<double>(n) * std::numeric_limits<double>::epsilon(), static_cast<int>(n));
      for (std::size_t d = 1; d <= n; ++d) REQUIRE_THAT(survival_probability(p, d), WithinAbs(exact[d], tol));
      REQUIRE_THAT(exact[0], WithinAbs(std::pow(1.0 - p, static_cast<double>(n)), tol));
    }
  }
}

TEST_CASE("survival probability reference values", "[ppm]") {
  CHECK(survival_probability(0.5, 3) == 0.125);
  CHECK(survival_probability(1.0, 1) == 1.0);
  CHECK(survival_probability(1.0, 3) == 0.0);
  CHECK(survival_probability(0.0, 4) == 0.0);
  CHECK_THROWS_AS(survival_probability(0.5, 0), Error);
  CHECK_THROWS_AS(survival_probability(1.2, 1), Error);
}

TEST_CASE("marked and unmarked outcomes partition the packets", "[ppm][property]") {
  for (double p = 0.0; p <= 1.0; p += 0.0625) {
    for (std::size_t n = 1; n <= 40; ++n) {
      double total = std::pow(1.0 - p, static_cast<double>(n));
      for (const auto& pt : survival_curve(p, n)) total += pt.probability;
      REQUIRE_THAT(total, WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("survival decreases with distance for 0 < p < 1", "[ppm][property]") {
  for (double p : {0.01, 0.2, 0.6, 0.99}) {
    const auto curve = survival_curve(p, 30);
    for (std::size_t i = 1; i < curve.size(); ++i) REQUIRE(curve[i].probability < curve[i - 1].probability);
  }
}

TEST_CASE("threshold marking probability", "[ppm]") {
  CHECK_THAT(threshold_marking_probability(1), WithinAbs(0.99, 1e-15));
  CHECK_THAT(threshold_marking_probability(2), WithinAbs(0.9, 1e-15));
  CHECK_THAT(threshold_marking_probability(25), WithinAbs(0.1682362288973290, 1e-15));
  double prev = 1.0;
  for (std::size_t n = 1; n <= 200; ++n) {
    const double p = threshold_marking_probability(n);
    REQUIRE(p < prev);
    // at p* the chance that nobody marks is exactly 1 - c
    REQUIRE_THAT(std::pow(1.0 - p, static_cast<double>(n)), WithinAbs(0.01, 1e-12));
    prev = p;
  }
  CHECK_THROWS_AS(threshold_marking_probability(0), Error);
  CHECK_THROWS_AS(threshold_marking_probability(3, 1.0), Error);
}

TEST_CASE("threshold guarantee holds empirically and fails just below", "[ppm]") {
  const std::size_t n = 10;
  const double star = threshold_marking_probability(n);
  auto marked_fraction = [&](double p, std::uint64_t seed) {
    auto s = build_linear_path(n, p);
    Rng rng(seed);
    const int N = 100000;
    int marked = 0;
    for (int i = 0; i < N; ++i) marked += forward_and_mark(s.path, p, rng).node_field.has_value();
    return static_cast<double>(marked) / N;
  };
  // 3 standard errors at the 1% miss rate
  const double se = std::sqrt(0.01 * 0.99 / 100000);
  CHECK(marked_fraction(star, 1) >= 0.99 - 3 * se);
  const double below = 1.0 - std::pow(1.0 - (star - 0.01), static_cast<double>(n));
  CHECK(below < 0.99);
  CHECK(marked_fraction(star - 0.01, 2) < 0.99);
}

TEST_CASE("forward_and_mark edge probabilities", "[ppm]") {
  auto s = build_linear_path(6, 0.0);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) REQUIRE_FALSE(forward_and_mark(s.path, 0.0, rng).node_field);
  for (int i = 0; i < 1000; ++i) REQUIRE(forward_and_mark(s.path, 1.0, rng).node_field == node(1));
  CHECK_THROWS_AS(forward_and_mark(s.path, -0.5, rng), Error);
}

TEST_CASE("forward_and_mark frequencies within 3 standard errors", "[ppm]") {
  const std::size_t n = 6;
  const int N = 100000;
  for (double p : {0.1, 0.4, 0.8}) {
    auto s = build_linear_path(n, p);
    Rng rng(derive_seed(11, {std::bit_cast<std::uint64_t>(p)}));
    std::vector<int> hits(n + 1, 0);
    for (int i = 0; i < N; ++i) {
      auto pkt = forward_and_mark(s.path, p, rng, static_cast<std::uint64_t>(i));
      hits[pkt.node_field ? raw(*pkt.node_field) : 0]++;
    }
    const auto exact = oracle::enumerate_mark_outcomes(p, n);
    for (std::size_t d = 0; d <= n; ++d) {
      const double se = std::sqrt(exact[d] * (1 - exact[d]) / N);
      REQUIRE(std::abs(static_cast<double>(hits[d]) / N - exact[d]) <= 3 * se + 1e-12);
    }
  }
}

TEST_CASE("geometric mark sampler has the marking law", "[ppm]") {
  const std::size_t n = 8;
  const int N = 200000;
  for (double p : {0.05, 0.3, 0.7}) {
    Rng rng(99);
    std::vector<int> hits(n + 1, 0);
    for (int i = 0; i < N; ++i) hits[sample_mark_distance(p, n, rng)]++;
    const auto exact = oracle::enumerate_mark_outcomes(p, n);
    for (std::size_t d = 0; d <= n; ++d) {
      const double se = std::sqrt(exact[d] * (1 - exact[d]) / N);
      REQUIRE(std::abs(static_cast<double>(hits[d]) / N - exact[d]) <= 4 * se + 1e-12);
    }
  }
  Rng rng(1);
  CHECK(sample_mark_distance(0.0, 5, rng) == 0);
  CHECK(sample_mark_distance(1.0, 5, rng) == 1);
}

TEST_CASE("same seed gives the same packets", "[ppm]") {
  auto s = build_linear_path(7, 0.3);
  Rng a(42), b(42);
  for (int i = 0; i < 500; ++i) {
    auto x = forward_and_mark(s.path, 0.3, a, static_cast<std::uint64_t>(i));
    auto y = forward_and_mark(s.path, 0.3, b, static_cast<std::uint64_t>(i));
    REQUIRE(x.node_field == y.node_field);
    REQUIRE(x.identity == y.identity);
  }
}

TEST_CASE("tally bookkeeping", "[ppm]") {
  MarkTally t;
  CHECK(t.total_packets() == 0);
  CHECK(t.counts().empty());
  t.add(std::nullopt);
  t.add(node(3));
  t.add(node(3));
  t.add(node(1));
  CHECK(t.total_packets() == 4);
  CHECK(t.unmarked() == 1);
  CHECK(t.count(node(3)) == 2);
  CHECK(t.count(node(9)) == 0);
  MarkTally u;
  u.add(node(1));
  t.merge(u);
  CHECK(t.count(node(1)) == 2);
  CHECK(t.total_packets() == 5);

  std::uint64_t sum = t.unmarked();
  for (const auto& [id, c] : t.counts()) sum += c;
  CHECK(sum == t.total_packets());
}

TEST_CASE("path reconstruction from counts", "[ppm]") {
  MarkTally t;
  for (int i = 0; i < 5; ++i) t.add(node(1));
  for (int i = 0; i < 3; ++i) t.add(node(2));
  t.add(node(3));
  CHECK(reconstruct_path(t) == std::vector<NodeId>{node(1), node(2), node(3)});
  CHECK(reconstruct_path(t, 3) == std::vector<NodeId>{node(1), node(2), node(3)});

  try {
    reconstruct_path(t, 4);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompleteEvidence);
  }
  t.add(node(3));
  t.add(node(3));
  try {
    reconstruct_path(t);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AmbiguousOrder);
  }
  CHECK(reconstruct_path(MarkTally{}).empty());
}

TEST_CASE("reconstruction recovers the path once the tally is ordered", "[ppm][property]") {
  for (std::size_t n : {2u, 4u, 7u}) {
    auto s = build_linear_path(n, 0.3);
    Rng rng(n);
    MarkTally t;
    for (int i = 0; i < 200000; ++i) t.add(forward_and_mark(s.path, 0.3, rng));
    REQUIRE(reconstruct_path(t, n) == s.path.victim_first());
  }
}
