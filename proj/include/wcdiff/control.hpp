#pragma once

#include <optional>
#include <vector>

#include "wcdiff/model.hpp"

namespace wcdiff {

struct ControlConfig {
  SubbandSelector selector;
  // Stacked per-band prior channels instead of the default averaged single
  // channel (the Table-3-style averaging is the default).
  bool stack_bands = false;

  std::int64_t prior_channels() const {
    return stack_bands ? std::int64_t(selector.selected().size()) : 1;
  }
};

// Trainable copy of the backbone encoder plus prior embedding and
// zero-initialized injection convs. Parameters live in their own store; the
// encoder copies share the backbone's parameter names, so checkpoints stay
// structurally aligned.
class ControlBranch {
 public:
  ControlBranch(BackboneModel& backbone, const ControlConfig& ccfg, std::uint64_t init_seed)
      : cfg_(backbone.config()), ccfg_(ccfg) {
    copy_encoder_entries(backbone.store());
    build_layers(Rng(init_seed));
    backbone_checksum_ = backbone.checksum();
  }

  ControlBranch(BackboneModel& backbone, const Checkpoint& ck) : cfg_(ck.cfg) {
    if (ck.kind != "branch")
      throw FormatError("expected a branch checkpoint, got kind '" + ck.kind + "'");
    if (!(ck.cfg == backbone.config()))
      throw FormatError("branch checkpoint config does not match backbone config");
    if (ck.backbone_checksum != backbone.checksum())
      throw IntegrityError("branch checkpoint was trained against a different backbone "
                           "(checksum mismatch)");
    ccfg_.selector = parse_selector(ck.selector);
    ccfg_.stack_bands = ck.prior_channels > 1;
    if (ck.prior_channels != ccfg_.prior_channels())
      throw FormatError("branch checkpoint prior_channels inconsistent with selector");
    ck.populate(store_);
    build_layers(Rng(0));
    ck.verify_bound(store_);
    backbone_checksum_ = ck.backbone_checksum;
  }

  ControlBranch(const ControlBranch&) = delete;
  ControlBranch& operator=(const ControlBranch&) = delete;

  void save(const std::string& path, const NoiseSchedule& sched, const NormStats& norm) const {
    Checkpoint ck = Checkpoint::from_store("branch", store_, cfg_, sched, norm);
    ck.prior_channels = ccfg_.prior_channels();
    ck.selector = ccfg_.selector.str();
    ck.backbone_checksum = backbone_checksum_;
    save_checkpoint(path, ck);
  }

  // Half-resolution prior tensor for one sample: averaged single channel, or
  // the selected bands stacked as channels.
  Tensor prior_tensor(const SubbandSet& set) const {
    if (!ccfg_.stack_bands) return tensor_from_volume(select_prior(set, ccfg_.selector));
    const auto chosen = ccfg_.selector.selected();
    const Dims3 half = set.bands[0].dims();
    Tensor out({1, std::int64_t(chosen.size()), half.d, half.h, half.w});
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const auto& band = set.bands[std::size_t(chosen[i])];
      if (band.dims() != half) throw ShapeError("prior bands have inconsistent dims");
      out.data().segment(std::int64_t(i) * half.count(), half.count()) = band.data();
    }
    return out;
  }

  // Runs the branch encoder on the backbone input plus embedded prior and
  // returns one injection offset per level.
  std::vector<Tensor> forward(const Tensor& x_t, const Tensor& y, const Tensor& tctx,
                              const Tensor& prior) {
    Tensor b = stem_->forward(concat_channels(x_t, y));
    Tensor pe = zero_prior_->forward(embed_->forward(prior));
    if (pe.shape() != b.shape())
      throw ShapeError("embedded prior shape " + pe.shape().str() +
                       " does not match stem output " + b.shape().str());
    b.data() += pe.data();

    std::vector<Tensor> offsets;
    for (std::int64_t l = 0; l < cfg_.levels; ++l) {
      b = enc_[std::size_t(l)].forward(b, tctx);
      offsets.push_back(zero_[std::size_t(l)].forward(b));
      if (l + 1 < cfg_.levels) b = down_[std::size_t(l)].forward(b);
    }
    return offsets;
  }

  // Consumes the gradients wrt the injected offsets. Gradients wrt the shared
  // time context and the network input terminate here: upstream of both sits
  // only the frozen backbone.
  void backward(const std::vector<Tensor>& grad_offsets) {
    if (std::int64_t(grad_offsets.size()) != cfg_.levels)
      throw ShapeError("expected one offset gradient per level");
    Tensor gi;
    for (std::int64_t l = cfg_.levels - 1; l >= 0; --l) {
      Tensor gb = zero_[std::size_t(l)].backward(grad_offsets[std::size_t(l)]);
      if (l + 1 < cfg_.levels) gb.data() += down_[std::size_t(l)].backward(gi).data();
      gi = enc_[std::size_t(l)].backward(gb).first;
    }
    embed_->backward(zero_prior_->backward(gi));
    stem_->backward(gi);
  }

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const ControlConfig& control_config() const { return ccfg_; }
  std::uint64_t backbone_checksum() const { return backbone_checksum_; }
  std::int64_t levels() const { return cfg_.levels; }

 private:
  void copy_encoder_entries(const ParamStore& backbone_store) {
    backbone_store.for_each([&](const Param& p) {
      if (p.name.rfind("stem.", 0) == 0 || p.name.rfind("enc", 0) == 0 ||
          p.name.rfind("down", 0) == 0) {
        store_.bind(p.name, p.value.shape(), [&](Tensor& t) { t.data() = p.value.data(); });
      }
    });
  }

  void build_layers(const Rng& rng) {
    cfg_.validate();
    stem_.emplace(store_, "stem", cfg_.in_channels, cfg_.base_channels, 3, 1, 1, rng);
    embed_.emplace(store_, "prior_embed", ccfg_.prior_channels(), cfg_.base_channels, rng);
    zero_prior_.emplace(store_, "zero_prior", cfg_.base_channels, cfg_.base_channels, 1, 1, 0,
                        rng, /*zero_init=*/true);
    for (std::int64_t l = 0; l < cfg_.levels; ++l) {
      const std::int64_t cin = l == 0 ? cfg_.base_channels : cfg_.channels_at(l);
      enc_.emplace_back(store_, "enc" + std::to_string(l), cin, cfg_.channels_at(l),
                        cfg_.time_embed_width, cfg_.gn_groups, rng);
      zero_.emplace_back(store_, "zero" + std::to_string(l), cfg_.channels_at(l),
                         cfg_.channels_at(l), 1, 1, 0, rng, /*zero_init=*/true);
    }
    for (std::int64_t l = 0; l + 1 < cfg_.levels; ++l)
      down_.emplace_back(store_, "down" + std::to_string(l), cfg_.channels_at(l),
                         cfg_.channels_at(l + 1), 3, 2, 1, rng);
  }

  nn::UNetConfig cfg_;
  ControlConfig ccfg_;
  ParamStore store_;
  std::optional<nn::Conv3d> stem_;
  std::optional<nn::ConvTranspose3d> embed_;
  std::optional<nn::Conv3d> zero_prior_;
  std::vector<nn::ResBlock> enc_;
  std::vector<nn::Conv3d> down_;
  std::vector<nn::Conv3d> zero_;
  std::uint64_t backbone_checksum_ = 0;
};

// Backbone plus control branch: h_l + ZeroConv_l(branch feature) on every
// encoder skip, with the backbone's parameters untouched.
class ControlledModel : public NoisePredictor {
 public:
  ControlledModel(BackboneModel& backbone, ControlBranch& branch)
      : backbone_(backbone), branch_(branch) {}

  Volume predict(const Volume& x_t, std::int64_t t, const Volume& y,
                 const SubbandSet* prior) override {
    if (!prior) throw UsageError("controlled predictor requires a wavelet prior");
    const Tensor tctx = backbone_.net().time_context(t, backbone_.schedule().T, 1);
    const Tensor tx = tensor_from_volume(x_t);
    const Tensor ty = tensor_from_volume(y);
    const std::vector<Tensor> offsets =
        branch_.forward(tx, ty, tctx, branch_.prior_tensor(*prior));
    auto out = backbone_.net().forward(tx, ty, tctx, &offsets);
    return volume_from_tensor(out.eps_hat);
  }

  void backward_from(const Volume& grad_eps) override {
    auto grads = backbone_.net().backward(tensor_from_volume(grad_eps));
    branch_.backward(grads.grad_skip_offsets);
  }

  BackboneModel& backbone() { return backbone_; }
  ControlBranch& branch() { return branch_; }

 private:
  BackboneModel& backbone_;
  ControlBranch& branch_;
};

}  // namespace wcdiff
