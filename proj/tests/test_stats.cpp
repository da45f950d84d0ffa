#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "wcdiff/rng.hpp"
#include "wcdiff/stats.hpp"

using namespace wcdiff;

namespace {

// Independent oracle: enumerate all 2^n sign assignments directly. Ranks of
// |d| use the same tie-averaging convention as the implementation under test,
// but the null distribution is built by explicit enumeration, not convolution.
double wilcoxon_enumeration_oracle(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double v : diffs)
    if (v != 0.0) d.push_back(v);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;

  std::vector<double> abs_vals(n);
  for (std::size_t i = 0; i < n; ++i) abs_vals[i] = std::abs(d[i]);

  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (abs_vals[j] < abs_vals[i]) below += 1.0;
      if (abs_vals[j] == abs_vals[i]) equal += 1.0;
    }
    ranks[i] = below + (equal + 1.0) / 2.0;
  }

  double w_plus = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += ranks[i];
    if (d[i] > 0.0) w_plus += ranks[i];
  }
  const double center = total / 2.0;
  const double obs_dev = std::abs(w_plus - center);

  std::uint64_t count = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint64_t(1) << i)) w += ranks[i];
    if (std::abs(w - center) >= obs_dev - 1e-9) ++count;
  }
  return double(count) / std::pow(2.0, double(n));
}

}  // namespace

TEST_CASE("signed-rank test on hand-checked samples") {
  CHECK(wilcoxon_signed_rank({1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wilcoxon_signed_rank({1.0, 2.0, 3.0, 4.0, 5.0}) ==
        doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(wilcoxon_signed_rank({-1.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wilcoxon_signed_rank({1.0, 2.0, 3.0, -4.0}) ==
        doctest::Approx(0.875).epsilon(1e-15));
}

TEST_CASE("zero differences are dropped before ranking") {
  CHECK(wilcoxon_signed_rank({}) == 1.0);
  CHECK(wilcoxon_signed_rank({0.0, 0.0}) == 1.0);
  CHECK(wilcoxon_signed_rank({0.0, 1.0, 2.0, 0.0, 3.0, 4.0, 5.0}) ==
        doctest::Approx(0.0625).epsilon(1e-15));
}

TEST_CASE("exact tail matches full enumeration for n <= 12") {
  std::uint64_t seed = 50;
  for (int rep = 0; rep < 50; ++rep, ++seed) {
    const Rng rng(seed);
    const std::size_t n = 1 + std::size_t(rng.bits(0) % 12);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse rounding forces frequent |d| ties and occasional zeros.
      d[i] = std::round(4.0 * rng.normal(1 + std::uint64_t(i))) / 4.0;
    }
    const double got = wilcoxon_signed_rank(d);
    const double want = wilcoxon_enumeration_oracle(d);
    CAPTURE(rep);
    CAPTURE(n);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("large samples use the tie-corrected normal approximation") {
  // round(normal(0.3, 1, 25), 1); zeros dropped leaves n = 25 > 20.
  const std::vector<double> d{0.8,  0.2,  0.9, 1.8,  0.1,  0.1,  1.9, 1.1, -0.2,
                              0.8,  -0.2, -0.2, 0.5, -1.6, -1.4, -0.3, -0.7, 0.6,
                              -0.6, -1.1, 1.8,  0.1, 0.4,  -1.1, -0.2};
  REQUIRE(d.size() == 25);
  CHECK(wilcoxon_signed_rank(d) == doctest::Approx(0.5623788164367485).epsilon(1e-9));

  // A clearly one-sided sample should be near-significant, and the p-value
  // stays in range.
  std::vector<double> shifted(30);
  const Rng rng(99);
  for (std::size_t i = 0; i < shifted.size(); ++i)
    shifted[i] = 1.0 + 0.3 * rng.normal(std::uint64_t(i));
  const double p = wilcoxon_signed_rank(shifted);
  CHECK(p > 0.0);
  CHECK(p < 1e-4);
}

TEST_CASE("non-finite differences are rejected") {
  CHECK_THROWS_AS(wilcoxon_signed_rank({1.0, std::nan("")}), UsageError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({std::numeric_limits<double>::infinity()}),
                  UsageError);
}

TEST_CASE("holm adjustment on a hand-checked example") {
  const std::vector<double> adj = holm_correct({0.01, 0.04, 0.03, 0.005});
  REQUIRE(adj.size() == 4);
  CHECK(adj[0] == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(adj[1] == doctest::Approx(0.06).epsilon(1e-15));
  CHECK(adj[2] == doctest::Approx(0.06).epsilon(1e-15));
  CHECK(adj[3] == doctest::Approx(0.02).epsilon(1e-15));
}

TEST_CASE("holm adjustment matches the step-down definition on random inputs") {
  std::uint64_t seed = 500;
  for (int rep = 0; rep < 30; ++rep, ++seed) {
    const Rng rng(seed);
    const std::size_t m = 1 + std::size_t(rng.bits(0) % 6);
    std::vector<double> p(m);
    for (std::size_t i = 0; i < m; ++i) p[i] = rng.uniform(1 + std::uint64_t(i));
    const std::vector<double> adj = holm_correct(p);

    // Reference: sort, scale by (m - i), running max, clamp.
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> want(m);
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      running = std::max(running, std::min(1.0, double(m - i) * p[order[i]]));
      want[order[i]] = running;
    }
    for (std::size_t i = 0; i < m; ++i)
      CHECK(adj[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // Adjusted values never drop below the raw ones and stay in [0, 1].
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(adj[i] >= p[i]);
      CHECK(adj[i] <= 1.0);
    }
  }
}

TEST_CASE("holm clamps to one and preserves single-test p-values") {
  const std::vector<double> adj = holm_correct({0.9, 0.8, 0.7});
  for (double a : adj) CHECK(a == 1.0);
  CHECK(holm_correct({0.123}) == std::vector<double>{0.123});
  CHECK(holm_correct({}).empty());
}

TEST_CASE("holm rejects p-values outside the unit interval") {
  CHECK_THROWS_AS(holm_correct({0.5, 1.5}), UsageError);
  CHECK_THROWS_AS(holm_correct({-0.1}), UsageError);
  CHECK_THROWS_AS(holm_correct({std::nan("")}), UsageError);
}
