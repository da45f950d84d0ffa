#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wcdiff/error.hpp"

namespace wcdiff {

namespace detail {

// Ranks of |d| with ties assigned the average rank of their group.
inline std::vector<double> tie_averaged_ranks(const std::vector<double>& abs_vals) {
  const std::size_t n = abs_vals.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return abs_vals[a] < abs_vals[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_vals[order[j + 1]] == abs_vals[order[i]]) ++j;
    const double avg = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Two-sided paired Wilcoxon signed-rank test. Zero differences are dropped;
// an empty sample after dropping is the degenerate case p = 1. Exact null
// distribution (all 2^n sign assignments, computed by convolution over
// half-integer ranks scaled to integers) for n <= 20; normal approximation
// with tie and continuity corrections beyond that.
inline double wilcoxon_signed_rank(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double v : diffs) {
    if (!std::isfinite(v)) throw UsageError("wilcoxon: non-finite difference");
    if (v != 0.0) d.push_back(v);
  }
  const std::size_t n = d.size();
  if (n == 0) return 1.0;

  std::vector<double> abs_vals(n);
  for (std::size_t i = 0; i < n; ++i) abs_vals[i] = std::abs(d[i]);
  const std::vector<double> ranks = detail::tie_averaged_ranks(abs_vals);

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0.0) w_plus += ranks[i];
  const double mu = double(n) * double(n + 1) / 4.0;

  if (n <= 20) {
    // Doubled ranks are integers even with tie averaging.
    std::vector<std::int64_t> r2(n);
    for (std::size_t i = 0; i < n; ++i) r2[i] = std::llround(2.0 * ranks[i]);
    const std::int64_t total = std::accumulate(r2.begin(), r2.end(), std::int64_t(0));
    std::vector<double> ways(std::size_t(total) + 1, 0.0);
    ways[0] = 1.0;
    std::int64_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      reach += r2[i];
      for (std::int64_t s = reach; s >= r2[i]; --s)
        ways[std::size_t(s)] += ways[std::size_t(s - r2[i])];
    }
    const double center = double(total) / 2.0;
    const double obs_dev = std::abs(2.0 * w_plus - center);
    double count = 0.0;
    for (std::int64_t s = 0; s <= total; ++s)
      if (std::abs(double(s) - center) >= obs_dev - 1e-9) count += ways[std::size_t(s)];
    return count / std::pow(2.0, double(n));
  }

  // Tie-corrected variance.
  double tie_term = 0.0;
  {
    std::vector<double> sorted = abs_vals;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = double(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double var =
      double(n) * double(n + 1) * double(2 * n + 1) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return 1.0;
  const double dev = std::abs(w_plus - mu);
  const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

// Holm step-down adjustment, returned in the original order.
inline std::vector<double> holm_correct(const std::vector<double>& pvals) {
  const std::size_t m = pvals.size();
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("holm: p-value outside [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double adj = std::min(1.0, double(m - i) * pvals[order[i]]);
    running = std::max(running, adj);
    adjusted[order[i]] = running;
  }
  return adjusted;
}

}  // namespace wcdiff
