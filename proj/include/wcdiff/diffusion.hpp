#pragma once

#include "wcdiff/rng.hpp"
#include "wcdiff/schedule.hpp"
#include "wcdiff/volume.hpp"
#include "wcdiff/wavelet.hpp"

namespace wcdiff {

// Epsilon predictor abstraction: the frozen backbone alone, or backbone plus
// control branch. The optional prior carries the wavelet decomposition of the
// conditioning volume; the predictor applies its own subband selection, so
// averaged and stacked priors share this one call path.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual Volume predict(const Volume& x_t, std::int64_t t, const Volume& y,
                         const SubbandSet* prior) = 0;

  // Reverse-mode pass from the gradient wrt the last prediction; accumulates
  // into trainable parameter grads.
  virtual void backward_from(const Volume& grad_eps) = 0;
};

inline Volume random_normal_volume(Dims3 dims, const Rng& rng) {
  Volume::Array a(dims.count());
  for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.normal(std::uint64_t(i));
  return Volume(dims, std::move(a), Unit::Arbitrary);
}

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Volume forward_sample(const Volume& x0, std::int64_t t, const Volume& eps,
                             const NoiseSchedule& sched) {
  if (eps.dims() != x0.dims()) throw ShapeError("forward_sample: eps dims != x0 dims");
  const double abar = sched.alpha_bar_at(t);
  return Volume(x0.dims(), std::sqrt(abar) * x0.data() + std::sqrt(1.0 - abar) * eps.data(),
                x0.unit());
}

// Voxel-mean squared error between injected and predicted noise, with
// gradients pushed through the predictor.
inline double training_loss(NoisePredictor& predictor, const Volume& x0, const Volume& y,
                            const SubbandSet* prior, std::int64_t t, const Volume& eps,
                            const NoiseSchedule& sched) {
  const Volume x_t = forward_sample(x0, t, eps, sched);
  const Volume eps_hat = predictor.predict(x_t, t, y, prior);
  if (eps_hat.dims() != eps.dims()) throw ShapeError("training_loss: prediction dims mismatch");
  const Volume::Array diff = eps_hat.data() - eps.data();
  const double n = double(diff.size());
  const double loss = diff.square().sum() / n;
  predictor.backward_from(Volume(eps.dims(), (2.0 / n) * diff));
  return loss;
}

// Ancestral reverse transition. z is required for t > 1 and ignored at t = 1,
// where the step is deterministic.
inline Volume reverse_step(NoisePredictor& predictor, const Volume& x_t, std::int64_t t,
                           const Volume& y, const SubbandSet* prior, const NoiseSchedule& sched,
                           const Volume* z, VarianceMode mode = VarianceMode::Beta) {
  const Volume eps_hat = predictor.predict(x_t, t, y, prior);
  const double alpha = sched.alpha_at(t);
  const double abar = sched.alpha_bar_at(t);
  const double coef = sched.beta_at(t) / std::sqrt(1.0 - abar);
  Volume::Array mean = (x_t.data() - coef * eps_hat.data()) / std::sqrt(alpha);
  if (t > 1) {
    if (!z) throw UsageError("reverse_step: noise z required for t > 1");
    if (z->dims() != x_t.dims()) throw ShapeError("reverse_step: z dims mismatch");
    mean += sched.sigma_at(t, mode) * z->data();
  }
  return Volume(x_t.dims(), std::move(mean), x_t.unit());
}

// Full ancestral chain from x_T ~ N(0, I). Noise streams are keyed by step so
// the result is a pure function of (seed, predictor, y, prior).
inline Volume sample(NoisePredictor& predictor, const Volume& y, const SubbandSet* prior,
                     const NoiseSchedule& sched, std::uint64_t seed,
                     VarianceMode mode = VarianceMode::Beta) {
  const Rng rng(seed);
  Volume x = random_normal_volume(y.dims(), rng.stream(0));
  for (std::int64_t t = sched.T; t >= 1; --t) {
    if (t > 1) {
      const Volume z = random_normal_volume(y.dims(), rng.stream(std::uint64_t(t)));
      x = reverse_step(predictor, x, t, y, prior, sched, &z, mode);
    } else {
      x = reverse_step(predictor, x, t, y, prior, sched, nullptr, mode);
    }
  }
  return x;
}

}  // namespace wcdiff
