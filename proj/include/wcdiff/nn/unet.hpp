#pragma once

#include <vector>

#include "wcdiff/nn/layers.hpp"

namespace wcdiff::nn {

struct UNetConfig {
  std::int64_t base_channels = 8;
  std::int64_t levels = 2;
  std::int64_t in_channels = 2;  // x_t concatenated with the conditioning volume y
  std::int64_t out_channels = 1;
  std::int64_t time_embed_width = 32;
  std::int64_t gn_groups = 4;

  bool operator==(const UNetConfig&) const = default;

  std::int64_t channels_at(std::int64_t level) const { return base_channels << level; }

  void validate() const {
    if (levels < 2) throw UsageError("unet: levels must be >= 2");
    if (base_channels < 1 || in_channels < 1 || out_channels < 1)
      throw UsageError("unet: channel counts must be positive");
    if (time_embed_width < 2 || time_embed_width % 2 != 0)
      throw UsageError("unet: time_embed_width must be even and >= 2");
    if (gn_groups < 1 || base_channels % gn_groups != 0)
      throw UsageError("unet: base_channels must be divisible by gn_groups");
  }

  // Spatial dims must survive (levels-1) halvings.
  void check_dims(Dims3 d) const {
    const std::int64_t factor = std::int64_t(1) << (levels - 1);
    if (d.d % factor || d.h % factor || d.w % factor)
      throw ShapeError("unet: input dims " + d.str() + " not divisible by " +
                       std::to_string(factor));
  }
};

// Raw sinusoidal encoding of t/T at geometrically spaced frequencies,
// lowest frequency 1 so the first component is injective over 1..T.
inline Eigen::ArrayXd time_embedding(std::int64_t t, std::int64_t T, std::int64_t width) {
  if (t < 1 || t > T) throw UsageError("time_embedding: t outside 1..T");
  if (width < 2 || width % 2 != 0) throw UsageError("time_embedding: width must be even");
  const double tau = double(t) / double(T);
  const std::int64_t half = width / 2;
  Eigen::ArrayXd e(width);
  for (std::int64_t i = 0; i < half; ++i) {
    const double omega =
        half == 1 ? 1.0 : std::pow(1000.0, double(i) / double(half - 1));
    e[i] = std::sin(omega * tau);
    e[half + i] = std::cos(omega * tau);
  }
  return e;
}

// Conv -> +time -> norm -> SiLU -> conv -> norm -> SiLU, the repeated unit of
// both encoder and decoder.
class ResBlock {
 public:
  ResBlock(ParamStore& store, const std::string& name, std::int64_t cin, std::int64_t cout,
           std::int64_t time_width, std::int64_t groups, const Rng& rng)
      : conv1_(store, name + ".conv1", cin, cout, 3, 1, 1, rng),
        tproj_(store, name + ".tproj", time_width, cout, rng),
        gn1_(store, name + ".gn1", cout, groups),
        act1_(name + ".act1"),
        conv2_(store, name + ".conv2", cout, cout, 3, 1, 1, rng),
        gn2_(store, name + ".gn2", cout, groups),
        act2_(name + ".act2"),
        cout_(cout) {}

  Tensor forward(const Tensor& x, const Tensor& tctx) {
    Tensor a = conv1_.forward(x);
    const Tensor tp = tproj_.forward(tctx);
    const TensorShape s = a.shape();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        a.data().segment(a.index(n, c, 0, 0, 0), s.spatial()) += tp.at(n, c, 0, 0, 0);
    return act2_.forward(gn2_.forward(conv2_.forward(act1_.forward(gn1_.forward(a)))));
  }

  // Returns (grad wrt x, grad wrt tctx).
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out) {
    Tensor g = gn1_.backward(act1_.backward(conv2_.backward(gn2_.backward(act2_.backward(grad_out)))));
    const TensorShape s = g.shape();
    Tensor gtp({s.n, cout_, 1, 1, 1});
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        gtp.at(n, c, 0, 0, 0) = g.data().segment(g.index(n, c, 0, 0, 0), s.spatial()).sum();
    Tensor grad_tctx = tproj_.backward(gtp);
    Tensor grad_x = conv1_.backward(g);
    return {std::move(grad_x), std::move(grad_tctx)};
  }

 private:
  Conv3d conv1_;
  Linear tproj_;
  GroupNorm gn1_;
  SiLU act1_;
  Conv3d conv2_;
  GroupNorm gn2_;
  SiLU act2_;
  std::int64_t cout_;
};

struct UNetOutput {
  Tensor eps_hat;
  std::vector<Tensor> encoder_features;  // one per level, bottom last
};

struct UNetGrads {
  Tensor grad_x_t;
  Tensor grad_y;
  std::vector<Tensor> grad_skip_offsets;  // one per level
};

// Minimal 3D U-Net epsilon predictor. Encoder features double channels and
// halve resolution per level; decoder mirrors with nearest-upsample + conv and
// skip concatenation. Skip offsets (one tensor per level, bottom included) are
// always added; callers without offsets add zeros, which keeps the two paths
// bit-identical by construction.
class UNet {
 public:
  UNet(ParamStore& store, const UNetConfig& cfg, const Rng& rng)
      : cfg_(cfg),
        stem_(store, "stem", cfg.in_channels, cfg.base_channels, 3, 1, 1, rng),
        time_fc1_(store, "time.fc1", cfg.time_embed_width, cfg.time_embed_width, rng),
        time_act_("time.act"),
        time_fc2_(store, "time.fc2", cfg.time_embed_width, cfg.time_embed_width, rng),
        out_(store, "out", cfg.base_channels, cfg.out_channels, 3, 1, 1, rng,
             /*zero_init=*/true) {
    cfg.validate();
    for (std::int64_t l = 0; l < cfg.levels; ++l) {
      const std::int64_t cin = l == 0 ? cfg.base_channels : cfg.channels_at(l);
      enc_.emplace_back(store, "enc" + std::to_string(l), cin, cfg.channels_at(l),
                        cfg.time_embed_width, cfg.gn_groups, rng);
    }
    for (std::int64_t l = 0; l + 1 < cfg.levels; ++l)
      down_.emplace_back(store, "down" + std::to_string(l), cfg.channels_at(l),
                         cfg.channels_at(l + 1), 3, 2, 1, rng);
    for (std::int64_t l = cfg.levels - 2; l >= 0; --l) {
      up_.emplace_back(store, "up" + std::to_string(l), cfg.channels_at(l + 1),
                       cfg.channels_at(l), 3, 1, 1, rng);
      upsample_.emplace_back("upsample" + std::to_string(l));
      dec_.emplace_back(store, "dec" + std::to_string(l), 2 * cfg.channels_at(l),
                        cfg.channels_at(l), cfg.time_embed_width, cfg.gn_groups, rng);
    }
  }

  const UNetConfig& config() const { return cfg_; }

  // Trainable projection of the raw sinusoid; shared with the control branch.
  Tensor time_context(std::int64_t t, std::int64_t T, std::int64_t batch) {
    const Eigen::ArrayXd e = time_embedding(t, T, cfg_.time_embed_width);
    Tensor temb({batch, cfg_.time_embed_width, 1, 1, 1});
    for (std::int64_t n = 0; n < batch; ++n)
      temb.data().segment(n * cfg_.time_embed_width, cfg_.time_embed_width) = e;
    return time_fc2_.forward(time_act_.forward(time_fc1_.forward(temb)));
  }

  UNetOutput forward(const Tensor& x_t, const Tensor& y, const Tensor& tctx,
                     const std::vector<Tensor>* skip_offsets = nullptr) {
    const TensorShape sx = x_t.shape();
    if (y.shape() != sx) throw ShapeError("unet: x_t and y shapes differ");
    cfg_.check_dims(sx.dims3());
    if (skip_offsets && std::int64_t(skip_offsets->size()) != cfg_.levels)
      throw ShapeError("unet: expected one skip offset per level");

    const Tensor xin = concat_channels(x_t, y);
    Tensor h = stem_.forward(xin);

    UNetOutput outp;
    for (std::int64_t l = 0; l < cfg_.levels; ++l) {
      h = enc_[std::size_t(l)].forward(h, tctx);
      outp.encoder_features.push_back(h);
      if (l + 1 < cfg_.levels) h = down_[std::size_t(l)].forward(h);
    }

    std::vector<Tensor> fused;
    for (std::int64_t l = 0; l < cfg_.levels; ++l) {
      Tensor f = outp.encoder_features[std::size_t(l)];
      const Tensor& off = skip_offsets
                              ? (*skip_offsets)[std::size_t(l)]
                              : zero_like(outp.encoder_features[std::size_t(l)]);
      if (off.shape() != f.shape())
        throw ShapeError("unet: skip offset " + std::to_string(l) + " shape " +
                         off.shape().str() + " != feature " + f.shape().str());
      f.data() += off.data();
      fused.push_back(std::move(f));
    }

    Tensor g = fused.back();
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      const std::int64_t l = cfg_.levels - 2 - std::int64_t(i);
      g = up_[i].forward(upsample_[i].forward(g));
      g = concat_channels(g, fused[std::size_t(l)]);
      g = dec_[i].forward(g, tctx);
    }
    outp.eps_hat = out_.forward(g);
    return outp;
  }

  // Reverse-mode pass from grad wrt eps_hat. Populates parameter grads for
  // trainable entries and returns activation gradients, including the
  // per-level gradients wrt the injected skip offsets.
  UNetGrads backward(const Tensor& grad_eps) {
    Tensor g = out_.backward(grad_eps);
    std::vector<Tensor> grad_fused(std::size_t(cfg_.levels));
    Tensor grad_tctx;
    bool have_tctx = false;
    auto add_tctx = [&](Tensor&& gt) {
      if (!have_tctx) {
        grad_tctx = std::move(gt);
        have_tctx = true;
      } else {
        grad_tctx.data() += gt.data();
      }
    };

    for (std::size_t i = dec_.size(); i-- > 0;) {
      const std::int64_t l = cfg_.levels - 2 - std::int64_t(i);
      auto [gin, gt] = dec_[i].backward(g);
      add_tctx(std::move(gt));
      const std::int64_t cl = cfg_.channels_at(l);
      grad_fused[std::size_t(l)] = slice_channels(gin, cl, cl);
      g = upsample_[i].backward(up_[i].backward(slice_channels(gin, 0, cl)));
    }
    grad_fused[std::size_t(cfg_.levels - 1)] = std::move(g);

    UNetGrads grads;
    grads.grad_skip_offsets.resize(std::size_t(cfg_.levels));
    Tensor ge;
    for (std::int64_t l = cfg_.levels - 1; l >= 0; --l) {
      grads.grad_skip_offsets[std::size_t(l)] = grad_fused[std::size_t(l)];
      Tensor gl = l == cfg_.levels - 1
                      ? grad_fused[std::size_t(l)]
                      : Tensor(grad_fused[std::size_t(l)].shape(),
                               grad_fused[std::size_t(l)].data() + ge.data());
      auto [gx, gt] = enc_[std::size_t(l)].backward(gl);
      add_tctx(std::move(gt));
      if (l > 0)
        ge = down_[std::size_t(l - 1)].backward(gx);
      else
        ge = std::move(gx);
    }

    Tensor gxin = stem_.backward(ge);
    time_fc1_.backward(time_act_.backward(time_fc2_.backward(grad_tctx)));

    const std::int64_t cx = 1;
    grads.grad_x_t = slice_channels(gxin, 0, cx);
    grads.grad_y = slice_channels(gxin, cx, cfg_.in_channels - cx);
    return grads;
  }

 private:
  static const Tensor& zero_like(const Tensor& t) {
    thread_local Tensor zero;
    if (zero.shape() != t.shape()) zero = Tensor(t.shape());
    return zero;
  }

  UNetConfig cfg_;
  Conv3d stem_;
  Linear time_fc1_;
  SiLU time_act_;
  Linear time_fc2_;
  std::vector<ResBlock> enc_;
  std::vector<Conv3d> down_;
  std::vector<Conv3d> up_;
  std::vector<Upsample2x> upsample_;
  std::vector<ResBlock> dec_;
  Conv3d out_;
};

}  // namespace wcdiff::nn
