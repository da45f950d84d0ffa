#pragma once

#include <optional>

#include "wcdiff/checkpoint.hpp"
#include "wcdiff/diffusion.hpp"
#include "wcdiff/nn/unet.hpp"

namespace wcdiff {

// U-Net epsilon predictor bundled with its parameters, schedule, and the
// normalization stats it was trained under.
class BackboneModel : public NoisePredictor {
 public:
  BackboneModel(const nn::UNetConfig& cfg, const NoiseSchedule& sched, const NormStats& norm,
                std::uint64_t init_seed)
      : cfg_(cfg), sched_(sched), norm_(norm) {
    cfg_.validate();
    net_.emplace(store_, cfg_, Rng(init_seed));
  }

  explicit BackboneModel(const Checkpoint& ck)
      : cfg_(ck.cfg), sched_(ck.schedule()), norm_(ck.norm) {
    if (ck.kind != "backbone")
      throw FormatError("expected a backbone checkpoint, got kind '" + ck.kind + "'");
    cfg_.validate();
    ck.populate(store_);
    net_.emplace(store_, cfg_, Rng(0));
    ck.verify_bound(store_);
  }

  BackboneModel(const BackboneModel&) = delete;
  BackboneModel& operator=(const BackboneModel&) = delete;

  static BackboneModel load(const std::string& path) {
    return BackboneModel(load_checkpoint(path));
  }
  void save(const std::string& path) const {
    save_checkpoint(path, Checkpoint::from_store("backbone", store_, cfg_, sched_, norm_));
  }

  Volume predict(const Volume& x_t, std::int64_t t, const Volume& y,
                 const SubbandSet* prior) override {
    if (prior) throw UsageError("backbone predictor takes no wavelet prior");
    const Tensor tctx = net_->time_context(t, sched_.T, 1);
    auto out = net_->forward(tensor_from_volume(x_t), tensor_from_volume(y), tctx, nullptr);
    return volume_from_tensor(out.eps_hat);
  }

  void backward_from(const Volume& grad_eps) override {
    net_->backward(tensor_from_volume(grad_eps));
  }

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  nn::UNet& net() { return *net_; }
  const nn::UNetConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const NormStats& norm() const { return norm_; }
  void set_norm(const NormStats& n) { norm_ = n; }

  void freeze() { store_.freeze_all(); }
  std::uint64_t checksum() const { return store_.checksum(); }

 private:
  nn::UNetConfig cfg_;
  NoiseSchedule sched_;
  NormStats norm_;
  ParamStore store_;
  std::optional<nn::UNet> net_;
};

}  // namespace wcdiff
