#pragma once

#include <vector>

#include "wcdiff/control.hpp"

namespace wcdiff {

// One training case: clean target, low-dose conditioning, and the wavelet
// decomposition of the conditioning volume (unused for backbone training).
struct TrainSample {
  Volume x0;
  Volume y;
  SubbandSet bands;
};

struct TrainHyper {
  std::int64_t steps = 1000;
  std::int64_t batch = 2;
  AdamConfig adam{};
  std::uint64_t seed = 0;
};

namespace detail {

template <typename LossFn>
std::vector<double> train_loop(ParamStore& trainable, const std::vector<TrainSample>& data,
                               const TrainHyper& hy, const NoiseSchedule& sched, LossFn&& loss_fn) {
  if (data.empty()) throw UsageError("training requires at least one sample");
  if (hy.steps < 0 || hy.batch < 1) throw UsageError("training requires steps >= 0, batch >= 1");
  const Rng rng(hy.seed);
  const Rng pick_case = rng.stream(1);
  const Rng pick_t = rng.stream(2);

  std::vector<double> history;
  history.reserve(std::size_t(hy.steps));
  for (std::int64_t step = 0; step < hy.steps; ++step) {
    trainable.zero_grads();
    double acc = 0.0;
    for (std::int64_t b = 0; b < hy.batch; ++b) {
      const std::uint64_t k = std::uint64_t(step) * std::uint64_t(hy.batch) + std::uint64_t(b);
      const TrainSample& s = data[std::size_t(pick_case.bits(k) % data.size())];
      const std::int64_t t = 1 + std::int64_t(pick_t.bits(k) % std::uint64_t(sched.T));
      const Volume eps = random_normal_volume(s.x0.dims(), rng.stream(0x1000 + k));
      acc += loss_fn(s, t, eps);
    }
    trainable.scale_grads(1.0 / double(hy.batch));
    trainable.adam_step(hy.adam);
    history.push_back(acc / double(hy.batch));
  }
  return history;
}

}  // namespace detail

// Plain conditional DDPM pretraining of the backbone on (x0, y) pairs.
inline std::vector<double> train_backbone(BackboneModel& model,
                                          const std::vector<TrainSample>& data,
                                          const TrainHyper& hy) {
  return detail::train_loop(model.store(), data, hy, model.schedule(),
                            [&](const TrainSample& s, std::int64_t t, const Volume& eps) {
                              return training_loss(model, s.x0, s.y, nullptr, t, eps,
                                                   model.schedule());
                            });
}

// Control-branch training against a frozen backbone. Only the branch store
// receives updates; any drift of the backbone values is a hard failure.
inline std::vector<double> train_controlnet(BackboneModel& backbone, ControlBranch& branch,
                                            const std::vector<TrainSample>& data,
                                            const TrainHyper& hy) {
  backbone.freeze();
  const std::uint64_t theta_before = backbone.checksum();
  if (branch.backbone_checksum() != theta_before)
    throw IntegrityError("control branch was created against a different backbone");

  ControlledModel model(backbone, branch);
  auto history = detail::train_loop(
      branch.store(), data, hy, backbone.schedule(),
      [&](const TrainSample& s, std::int64_t t, const Volume& eps) {
        return training_loss(model, s.x0, s.y, &s.bands, t, eps, backbone.schedule());
      });

  if (backbone.checksum() != theta_before)
    throw IntegrityError("backbone parameters changed during control training");
  return history;
}

}  // namespace wcdiff
