#pragma once

#include <cmath>
#include <vector>

#include "wcdiff/rng.hpp"
#include "wcdiff/volume.hpp"

namespace wcdiff {

struct Ellipsoid {
  double cd = 0, ch = 0, cw = 0;  // center, voxel coordinates
  double sd = 1, sh = 1, sw = 1;  // semi-axes, voxels
  double uptake = 0;
};

struct PhantomSpec {
  Dims3 dims;
  double background = 1.0;
  std::vector<Ellipsoid> ellipsoids;
  double bias_amplitude = 0.0;  // multiplicative field strength, in [0, 1)
  std::uint64_t seed = 0;

  void validate() const {
    if (!dims.positive()) throw UsageError("phantom: dims must be positive");
    if (background < 0.0) throw UsageError("phantom: background uptake must be >= 0");
    if (!(bias_amplitude >= 0.0 && bias_amplitude < 1.0))
      throw UsageError("phantom: bias amplitude must lie in [0, 1)");
    for (const auto& e : ellipsoids) {
      if (e.uptake < 0.0) throw UsageError("phantom: ellipsoid uptake must be >= 0");
      if (e.sd <= 0.0 || e.sh <= 0.0 || e.sw <= 0.0)
        throw UsageError("phantom: ellipsoid semi-axes must be positive");
      if (e.cd - e.sd < 0.0 || e.cd + e.sd > double(dims.d - 1) || e.ch - e.sh < 0.0 ||
          e.ch + e.sh > double(dims.h - 1) || e.cw - e.sw < 0.0 ||
          e.cw + e.sw > double(dims.w - 1))
        throw UsageError("phantom: ellipsoid extends outside the volume");
    }
  }
};

// Ellipsoids with an erfc-smoothed boundary (2-voxel sigma) on a constant
// background, times a low-frequency multiplicative cosine bias field.
inline Volume generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Dims3 dims = spec.dims;
  constexpr double kEdgeSigma = 2.0;
  constexpr int kBiasWaves = 4;
  constexpr double kPi = 3.14159265358979323846;

  struct Wave {
    double fd, fh, fw, phase;
  };
  std::vector<Wave> waves;
  if (spec.bias_amplitude > 0.0) {
    const Rng rng = Rng(spec.seed).stream(7);
    for (int k = 0; k < kBiasWaves; ++k) {
      const auto freq = [&](std::uint64_t c) {
        const double f = 1.0 + double(rng.bits(c) % 2);
        return rng.bits(c + 1000) % 2 ? f : -f;
      };
      waves.push_back({freq(std::uint64_t(k) * 3), freq(std::uint64_t(k) * 3 + 1),
                       freq(std::uint64_t(k) * 3 + 2),
                       rng.uniform(std::uint64_t(k) + 64) * 2.0 * kPi});
    }
  }

  Volume::Array data(dims.count());
  std::int64_t i = 0;
  for (std::int64_t d = 0; d < dims.d; ++d)
    for (std::int64_t h = 0; h < dims.h; ++h)
      for (std::int64_t w = 0; w < dims.w; ++w, ++i) {
        double val = spec.background;
        for (const auto& e : spec.ellipsoids) {
          const double rd = (double(d) - e.cd) / e.sd;
          const double rh = (double(h) - e.ch) / e.sh;
          const double rw = (double(w) - e.cw) / e.sw;
          const double rho = std::sqrt(rd * rd + rh * rh + rw * rw);
          const double min_semi = std::min(e.sd, std::min(e.sh, e.sw));
          const double delta = (rho - 1.0) * min_semi;
          const double s = 0.5 * std::erfc(delta / (std::sqrt(2.0) * kEdgeSigma));
          val += (e.uptake - spec.background) * s;
        }
        if (!waves.empty()) {
          double b = 0.0;
          for (const auto& wv : waves)
            b += std::cos(2.0 * kPi *
                              (wv.fd * double(d) / double(dims.d) +
                               wv.fh * double(h) / double(dims.h) +
                               wv.fw * double(w) / double(dims.w)) +
                          wv.phase);
          val *= 1.0 + spec.bias_amplitude * b / double(kBiasWaves);
        }
        data[i] = val;
      }
  return Volume(dims, std::move(data), Unit::Suv);
}

enum class NoiseModel { Poisson, Gaussian };

inline NoiseModel parse_noise_model(const std::string& s) {
  if (s == "poisson") return NoiseModel::Poisson;
  if (s == "gaussian") return NoiseModel::Gaussian;
  throw UsageError("unknown noise model: " + s + " (expected poisson or gaussian)");
}

// Count-statistics dose simulation: k ~ Poisson(vol * dose * counts_per_unit)
// per voxel, rescaled back so the expectation equals the input. The Gaussian
// alternative matches the Poisson mean and variance.
inline Volume simulate_low_dose(const Volume& vol, double dose_fraction, double counts_per_unit,
                                std::uint64_t seed, NoiseModel model = NoiseModel::Poisson) {
  if (!(dose_fraction > 0.0 && dose_fraction <= 1.0))
    throw UsageError("simulate_low_dose: dose_fraction must lie in (0, 1]");
  if (!(counts_per_unit > 0.0))
    throw UsageError("simulate_low_dose: counts_per_unit must be positive");
  if ((vol.data() < 0.0).any())
    throw UsageError("simulate_low_dose: input volume must be non-negative");

  const double scale = dose_fraction * counts_per_unit;
  const Rng rng(seed);
  Volume::Array out(vol.size());
  if (model == NoiseModel::Poisson) {
    for (std::int64_t i = 0; i < vol.size(); ++i)
      out[i] = double(rng.poisson(vol.data()[i] * scale, std::uint64_t(i))) / scale;
  } else {
    for (std::int64_t i = 0; i < vol.size(); ++i)
      out[i] = vol.data()[i] +
               std::sqrt(vol.data()[i] / scale) * rng.normal(std::uint64_t(i));
  }
  return Volume(vol.dims(), std::move(out), vol.unit());
}

}  // namespace wcdiff
