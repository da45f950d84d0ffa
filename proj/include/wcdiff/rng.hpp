#pragma once

#include <cmath>
#include <cstdint>

#include "wcdiff/error.hpp"

namespace wcdiff {

// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Counter-based generator: every draw is a pure function of (key, counter),
// so results do not depend on call order or threading. Substreams are derived
// by hashing a stream id into the key.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed + 0x9E3779B97F4A7C15ULL)) {}

  Rng stream(std::uint64_t id) const {
    Rng r(0);
    r.key_ = mix64(key_ ^ mix64(id + 0xD1B54A32D192ED03ULL));
    return r;
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + 0x9E3779B97F4A7C15ULL * (counter + 1));
  }

  // Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes the counter pair (2c, 2c+1).
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Poisson draw tied to a single counter. Small rates use CDF inversion on
  // one uniform; large rates fall back to a rounded normal (relative error
  // well below the tolerances this project tests at).
  std::int64_t poisson(double lambda, std::uint64_t counter) const {
    if (lambda < 0.0) throw UsageError("poisson: negative rate");
    if (lambda == 0.0) return 0;
    if (lambda <= 256.0) {
      const double u = uniform(2 * counter);
      double p = std::exp(-lambda);
      double cdf = p;
      std::int64_t k = 0;
      while (u > cdf) {
        ++k;
        p *= lambda / static_cast<double>(k);
        cdf += p;
        if (k > 4096) break;  // cdf numerically saturated
      }
      return k;
    }
    const double z = normal(counter);
    const double k = std::llround(lambda + std::sqrt(lambda) * z);
    return k > 0.0 ? static_cast<std::int64_t>(k) : 0;
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

// FNV-1a, used for config hashes and parameter checksums.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001B3ULL;
    }
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace wcdiff
