#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>

#include "wcdiff/error.hpp"

namespace wcdiff {

enum class VarianceMode { Beta, BetaTilde };

inline const char* variance_mode_name(VarianceMode m) {
  return m == VarianceMode::Beta ? "beta" : "beta_tilde";
}

inline VarianceMode parse_variance_mode(const std::string& s) {
  if (s == "beta") return VarianceMode::Beta;
  if (s == "beta_tilde") return VarianceMode::BetaTilde;
  throw UsageError("unknown variance mode: " + s + " (expected beta or beta_tilde)");
}

// Forward-process variance schedule, 1-based in t to match the usual
// t = 1..T indexing.
struct NoiseSchedule {
  std::int64_t T = 0;
  Eigen::ArrayXd beta;       // beta[t-1] = beta_t
  Eigen::ArrayXd alpha;      // 1 - beta_t
  Eigen::ArrayXd alpha_bar;  // prod_{s<=t} alpha_s

  double beta_at(std::int64_t t) const { return beta[check(t)]; }
  double alpha_at(std::int64_t t) const { return alpha[check(t)]; }
  double alpha_bar_at(std::int64_t t) const { return alpha_bar[check(t)]; }

  // Reverse-step noise scale; sigma_1 = 0 so the last step is deterministic.
  double sigma_at(std::int64_t t, VarianceMode mode = VarianceMode::Beta) const {
    check(t);
    if (t == 1) return 0.0;
    if (mode == VarianceMode::Beta) return std::sqrt(beta_at(t));
    const double prev_bar = alpha_bar_at(t - 1);
    const double tilde = (1.0 - prev_bar) / (1.0 - alpha_bar_at(t)) * beta_at(t);
    return std::sqrt(tilde);
  }

 private:
  std::int64_t check(std::int64_t t) const {
    if (t < 1 || t > T)
      throw UsageError("schedule step t=" + std::to_string(t) + " outside 1.." +
                       std::to_string(T));
    return t - 1;
  }
};

inline NoiseSchedule make_linear_schedule(std::int64_t T, double beta_min, double beta_max) {
  if (T < 1) throw UsageError("schedule requires T >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw UsageError("schedule requires 0 < beta_min <= beta_max < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double bar = 1.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    const double b =
        T == 1 ? beta_min : beta_min + double(t - 1) * (beta_max - beta_min) / double(T - 1);
    s.beta[t - 1] = b;
    s.alpha[t - 1] = 1.0 - b;
    bar *= 1.0 - b;
    s.alpha_bar[t - 1] = bar;
  }
  return s;
}

}  // namespace wcdiff
