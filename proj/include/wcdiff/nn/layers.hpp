#pragma once

#include <optional>
#include <string>

#include "wcdiff/param_store.hpp"

namespace wcdiff::nn {

using Eigen::Index;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

inline Rng layer_rng(const Rng& rng, const std::string& name) {
  Fnv1a h;
  h.update(name.data(), name.size());
  return rng.stream(h.digest());
}

inline void check_finite(const Tensor& t, const std::string& layer) {
  if (!t.all_finite()) throw NumericError("non-finite activation after " + layer);
}

// ---------------------------------------------------------------------------
// 3D convolution, cubic kernel, via im2col + GEMM.

class Conv3d {
 public:
  Conv3d(ParamStore& store, std::string name, std::int64_t cin, std::int64_t cout, std::int64_t k,
         std::int64_t stride, std::int64_t pad, const Rng& rng, bool zero_init = false)
      : name_(std::move(name)), cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad) {
    const TensorShape ws{cout, cin, k, k, k};
    const TensorShape bs{1, cout, 1, 1, 1};
    if (zero_init) {
      w_ = &store.bind_zero(name_ + ".w", ws);
    } else {
      const Rng lr = layer_rng(rng, name_ + ".w");
      const double stddev = std::sqrt(2.0 / double(cin * k * k * k));
      w_ = &store.bind(name_ + ".w", ws, [&](Tensor& t) { init_normal(t, lr, stddev); });
    }
    b_ = &store.bind_zero(name_ + ".b", bs);
  }

  Dims3 out_dims(Dims3 in) const {
    auto one = [&](std::int64_t n) { return (n + 2 * pad_ - k_) / stride_ + 1; };
    return {one(in.d), one(in.h), one(in.w)};
  }

  Tensor forward(const Tensor& x) {
    const TensorShape s = x.shape();
    if (s.c != cin_)
      throw ShapeError(name_ + ": expected " + std::to_string(cin_) + " input channels, got " +
                       std::to_string(s.c));
    const Dims3 od = out_dims(s.dims3());
    if (!od.positive()) throw ShapeError(name_ + ": input " + s.str() + " too small for kernel");
    Tensor out({s.n, cout_, od.d, od.h, od.w});

    const Index rows = Index(cin_ * k_ * k_ * k_);
    const Index cols = Index(od.count());
    Eigen::MatrixXd col(rows, cols);
    ConstMapRM W(w_->value.data().data(), Index(cout_), rows);
    for (std::int64_t n = 0; n < s.n; ++n) {
      im2col(x, n, od, col);
      MapRM out_map(out.data().data() + out.index(n, 0, 0, 0, 0), Index(cout_), cols);
      out_map.noalias() = W * col;
      for (std::int64_t co = 0; co < cout_; ++co)
        out_map.row(Index(co)).array() += b_->value.data()[co];
    }
    cache_x_ = x;
    check_finite(out, name_);
    return out;
  }

  Tensor backward(const Tensor& grad_out) {
    if (!cache_x_) throw StateError(name_ + ": backward without forward");
    const Tensor x = std::move(*cache_x_);
    cache_x_.reset();

    const TensorShape s = x.shape();
    const Dims3 od = out_dims(s.dims3());
    if (grad_out.shape() != TensorShape{s.n, cout_, od.d, od.h, od.w})
      throw ShapeError(name_ + ": grad_out shape mismatch");

    const Index rows = Index(cin_ * k_ * k_ * k_);
    const Index cols = Index(od.count());
    Eigen::MatrixXd col(rows, cols);
    Eigen::MatrixXd grad_col(rows, cols);
    ConstMapRM W(w_->value.data().data(), Index(cout_), rows);
    const bool train = w_->trainable;

    Tensor grad_in(s);
    for (std::int64_t n = 0; n < s.n; ++n) {
      ConstMapRM go(grad_out.data().data() + grad_out.index(n, 0, 0, 0, 0), Index(cout_), cols);
      if (train) {
        im2col(x, n, od, col);
        MapRM gw(w_->grad.data().data(), Index(cout_), rows);
        gw.noalias() += go * col.transpose();
        for (std::int64_t co = 0; co < cout_; ++co)
          b_->grad.data()[co] += go.row(Index(co)).sum();
      }
      grad_col.noalias() = W.transpose() * go;
      col2im(grad_col, n, od, grad_in);
    }
    return grad_in;
  }

  const std::string& name() const { return name_; }

 private:
  void im2col(const Tensor& x, std::int64_t n, Dims3 od, Eigen::MatrixXd& col) const {
    const TensorShape s = x.shape();
    Index c = 0;
    for (std::int64_t zo = 0; zo < od.d; ++zo)
      for (std::int64_t yo = 0; yo < od.h; ++yo)
        for (std::int64_t xo = 0; xo < od.w; ++xo, ++c) {
          const std::int64_t z0 = zo * stride_ - pad_;
          const std::int64_t y0 = yo * stride_ - pad_;
          const std::int64_t x0 = xo * stride_ - pad_;
          Index r = 0;
          for (std::int64_t ci = 0; ci < cin_; ++ci)
            for (std::int64_t kz = 0; kz < k_; ++kz) {
              const std::int64_t z = z0 + kz;
              for (std::int64_t ky = 0; ky < k_; ++ky) {
                const std::int64_t y = y0 + ky;
                for (std::int64_t kx = 0; kx < k_; ++kx, ++r) {
                  const std::int64_t xx = x0 + kx;
                  const bool inside = z >= 0 && z < s.d && y >= 0 && y < s.h && xx >= 0 &&
                                      xx < s.w;
                  col(r, c) = inside ? x.at(n, ci, z, y, xx) : 0.0;
                }
              }
            }
        }
  }

  void col2im(const Eigen::MatrixXd& grad_col, std::int64_t n, Dims3 od, Tensor& grad_in) const {
    const TensorShape s = grad_in.shape();
    Index c = 0;
    for (std::int64_t zo = 0; zo < od.d; ++zo)
      for (std::int64_t yo = 0; yo < od.h; ++yo)
        for (std::int64_t xo = 0; xo < od.w; ++xo, ++c) {
          const std::int64_t z0 = zo * stride_ - pad_;
          const std::int64_t y0 = yo * stride_ - pad_;
          const std::int64_t x0 = xo * stride_ - pad_;
          Index r = 0;
          for (std::int64_t ci = 0; ci < cin_; ++ci)
            for (std::int64_t kz = 0; kz < k_; ++kz) {
              const std::int64_t z = z0 + kz;
              for (std::int64_t ky = 0; ky < k_; ++ky) {
                const std::int64_t y = y0 + ky;
                for (std::int64_t kx = 0; kx < k_; ++kx, ++r) {
                  const std::int64_t xx = x0 + kx;
                  if (z >= 0 && z < s.d && y >= 0 && y < s.h && xx >= 0 && xx < s.w)
                    grad_in.at(n, ci, z, y, xx) += grad_col(r, c);
                }
              }
            }
        }
  }

  std::string name_;
  std::int64_t cin_, cout_, k_, stride_, pad_;
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  std::optional<Tensor> cache_x_;
};

// ---------------------------------------------------------------------------
// Transposed 3D convolution with kernel 2, stride 2 (exact 2x upsampling).

class ConvTranspose3d {
 public:
  ConvTranspose3d(ParamStore& store, std::string name, std::int64_t cin, std::int64_t cout,
                  const Rng& rng)
      : name_(std::move(name)), cin_(cin), cout_(cout) {
    const TensorShape ws{cin, cout, 2, 2, 2};
    const Rng lr = layer_rng(rng, name_ + ".w");
    const double stddev = std::sqrt(2.0 / double(cin * 8));
    w_ = &store.bind(name_ + ".w", ws, [&](Tensor& t) { init_normal(t, lr, stddev); });
    b_ = &store.bind_zero(name_ + ".b", {1, cout, 1, 1, 1});
  }

  Tensor forward(const Tensor& x) {
    const TensorShape s = x.shape();
    if (s.c != cin_) throw ShapeError(name_ + ": input channel mismatch");
    Tensor out({s.n, cout_, 2 * s.d, 2 * s.h, 2 * s.w});
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t co = 0; co < cout_; ++co) {
        const double bias = b_->value.data()[co];
        for (std::int64_t d = 0; d < 2 * s.d; ++d)
          for (std::int64_t h = 0; h < 2 * s.h; ++h)
            for (std::int64_t w = 0; w < 2 * s.w; ++w) out.at(n, co, d, h, w) = bias;
      }
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t ci = 0; ci < cin_; ++ci)
        for (std::int64_t d = 0; d < s.d; ++d)
          for (std::int64_t h = 0; h < s.h; ++h)
            for (std::int64_t w = 0; w < s.w; ++w) {
              const double v = x.at(n, ci, d, h, w);
              for (std::int64_t co = 0; co < cout_; ++co)
                for (std::int64_t kd = 0; kd < 2; ++kd)
                  for (std::int64_t kh = 0; kh < 2; ++kh)
                    for (std::int64_t kw = 0; kw < 2; ++kw)
                      out.at(n, co, 2 * d + kd, 2 * h + kh, 2 * w + kw) +=
                          v * w_->value.at(ci, co, kd, kh, kw);
            }
    cache_x_ = x;
    check_finite(out, name_);
    return out;
  }

  Tensor backward(const Tensor& grad_out) {
    if (!cache_x_) throw StateError(name_ + ": backward without forward");
    const Tensor x = std::move(*cache_x_);
    cache_x_.reset();
    const TensorShape s = x.shape();
    if (grad_out.shape() != TensorShape{s.n, cout_, 2 * s.d, 2 * s.h, 2 * s.w})
      throw ShapeError(name_ + ": grad_out shape mismatch");

    const bool train = w_->trainable;
    if (train) {
      for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t co = 0; co < cout_; ++co) {
          double gb = 0.0;
          const std::int64_t base = grad_out.index(n, co, 0, 0, 0);
          gb += grad_out.data().segment(base, 8 * s.spatial()).sum();
          b_->grad.data()[co] += gb;
        }
    }

    Tensor grad_in(s);
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t ci = 0; ci < cin_; ++ci)
        for (std::int64_t d = 0; d < s.d; ++d)
          for (std::int64_t h = 0; h < s.h; ++h)
            for (std::int64_t w = 0; w < s.w; ++w) {
              const double v = x.at(n, ci, d, h, w);
              double acc = 0.0;
              for (std::int64_t co = 0; co < cout_; ++co)
                for (std::int64_t kd = 0; kd < 2; ++kd)
                  for (std::int64_t kh = 0; kh < 2; ++kh)
                    for (std::int64_t kw = 0; kw < 2; ++kw) {
                      const double go = grad_out.at(n, co, 2 * d + kd, 2 * h + kh, 2 * w + kw);
                      acc += go * w_->value.at(ci, co, kd, kh, kw);
                      if (train) w_->grad.at(ci, co, kd, kh, kw) += go * v;
                    }
              grad_in.at(n, ci, d, h, w) = acc;
            }
    return grad_in;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::int64_t cin_, cout_;
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  std::optional<Tensor> cache_x_;
};

// ---------------------------------------------------------------------------
// Group normalization over (channels-per-group x spatial), per sample.

class GroupNorm {
 public:
  GroupNorm(ParamStore& store, std::string name, std::int64_t channels, std::int64_t groups)
      : name_(std::move(name)), channels_(channels), groups_(groups) {
    if (groups < 1 || channels % groups != 0)
      throw UsageError(name_ + ": channels " + std::to_string(channels) +
                       " not divisible by groups " + std::to_string(groups));
    g_ = &store.bind(name_ + ".g", {1, channels, 1, 1, 1},
                     [](Tensor& t) { t.data().setOnes(); });
    b_ = &store.bind_zero(name_ + ".b", {1, channels, 1, 1, 1});
  }

  Tensor forward(const Tensor& x) {
    const TensorShape s = x.shape();
    if (s.c != channels_) throw ShapeError(name_ + ": channel mismatch");
    const std::int64_t cpg = channels_ / groups_;
    const std::int64_t m = cpg * s.spatial();

    Tensor xhat(s);
    inv_std_.resize(s.n * groups_);
    Tensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t g = 0; g < groups_; ++g) {
        const std::int64_t base = x.index(n, g * cpg, 0, 0, 0);
        auto seg = x.data().segment(base, m);
        const double mean = seg.mean();
        const double var = (seg - mean).square().sum() / double(m);
        const double inv = 1.0 / std::sqrt(var + kEps);
        inv_std_[n * groups_ + g] = inv;
        xhat.data().segment(base, m) = (seg - mean) * inv;
        for (std::int64_t c = 0; c < cpg; ++c) {
          const std::int64_t cb = x.index(n, g * cpg + c, 0, 0, 0);
          out.data().segment(cb, s.spatial()) =
              xhat.data().segment(cb, s.spatial()) * g_->value.data()[g * cpg + c] +
              b_->value.data()[g * cpg + c];
        }
      }
    cache_xhat_ = std::move(xhat);
    check_finite(out, name_);
    return out;
  }

  Tensor backward(const Tensor& grad_out) {
    if (!cache_xhat_) throw StateError(name_ + ": backward without forward");
    const Tensor xhat = std::move(*cache_xhat_);
    cache_xhat_.reset();
    const TensorShape s = xhat.shape();
    if (grad_out.shape() != s) throw ShapeError(name_ + ": grad_out shape mismatch");
    const std::int64_t cpg = channels_ / groups_;
    const std::int64_t sp = s.spatial();
    const std::int64_t m = cpg * sp;
    const bool train = g_->trainable;

    Tensor grad_in(s);
    Eigen::ArrayXd dxhat(m);
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t g = 0; g < groups_; ++g) {
        const std::int64_t base = xhat.index(n, g * cpg, 0, 0, 0);
        for (std::int64_t c = 0; c < cpg; ++c) {
          const std::int64_t ch = g * cpg + c;
          const std::int64_t cb = xhat.index(n, ch, 0, 0, 0);
          auto go = grad_out.data().segment(cb, sp);
          auto xh = xhat.data().segment(cb, sp);
          if (train) {
            g_->grad.data()[ch] += (go * xh).sum();
            b_->grad.data()[ch] += go.sum();
          }
          dxhat.segment(c * sp, sp) = go * g_->value.data()[ch];
        }
        auto xh_all = xhat.data().segment(base, m);
        const double mean_d = dxhat.mean();
        const double mean_dx = (dxhat * xh_all).sum() / double(m);
        grad_in.data().segment(base, m) =
            inv_std_[n * groups_ + g] * (dxhat - mean_d - xh_all * mean_dx);
      }
    return grad_in;
  }

  const std::string& name() const { return name_; }

  static constexpr double kEps = 1e-5;

 private:
  std::string name_;
  std::int64_t channels_, groups_;
  Param* g_ = nullptr;
  Param* b_ = nullptr;
  std::optional<Tensor> cache_xhat_;
  std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------
// SiLU activation x * sigmoid(x).

class SiLU {
 public:
  explicit SiLU(std::string name) : name_(std::move(name)) {}

  Tensor forward(const Tensor& x) {
    Tensor out(x.shape());
    out.data() = x.data() / (1.0 + (-x.data()).exp());
    cache_x_ = x;
    check_finite(out, name_);
    return out;
  }

  Tensor backward(const Tensor& grad_out) {
    if (!cache_x_) throw StateError(name_ + ": backward without forward");
    const Tensor x = std::move(*cache_x_);
    cache_x_.reset();
    if (grad_out.shape() != x.shape()) throw ShapeError(name_ + ": grad_out shape mismatch");
    Tensor grad_in(x.shape());
    const Eigen::ArrayXd sig = 1.0 / (1.0 + (-x.data()).exp());
    grad_in.data() = grad_out.data() * sig * (1.0 + x.data() * (1.0 - sig));
    return grad_in;
  }

 private:
  std::string name_;
  std::optional<Tensor> cache_x_;
};

// ---------------------------------------------------------------------------
// Fully connected layer on (n, features, 1, 1, 1) tensors.

class Linear {
 public:
  Linear(ParamStore& store, std::string name, std::int64_t in, std::int64_t out, const Rng& rng,
         bool zero_init = false)
      : name_(std::move(name)), in_(in), out_(out) {
    const TensorShape ws{out, in, 1, 1, 1};
    if (zero_init) {
      w_ = &store.bind_zero(name_ + ".w", ws);
    } else {
      const Rng lr = layer_rng(rng, name_ + ".w");
      const double stddev = std::sqrt(2.0 / double(in));
      w_ = &store.bind(name_ + ".w", ws, [&](Tensor& t) { init_normal(t, lr, stddev); });
    }
    b_ = &store.bind_zero(name_ + ".b", {1, out, 1, 1, 1});
  }

  Tensor forward(const Tensor& x) {
    const TensorShape s = x.shape();
    if (s.c != in_ || s.d != 1 || s.h != 1 || s.w != 1)
      throw ShapeError(name_ + ": expected (n," + std::to_string(in_) + ",1,1,1), got " + s.str());
    Tensor out({s.n, out_, 1, 1, 1});
    ConstMapRM W(w_->value.data().data(), Index(out_), Index(in_));
    ConstMapRM X(x.data().data(), Index(s.n), Index(in_));
    MapRM O(out.data().data(), Index(s.n), Index(out_));
    O.noalias() = X * W.transpose();
    for (std::int64_t n = 0; n < s.n; ++n)
      O.row(Index(n)) += ConstMapRM(b_->value.data().data(), 1, Index(out_));
    cache_x_ = x;
    check_finite(out, name_);
    return out;
  }

  Tensor backward(const Tensor& grad_out) {
    if (!cache_x_) throw StateError(name_ + ": backward without forward");
    const Tensor x = std::move(*cache_x_);
    cache_x_.reset();
    const TensorShape s = x.shape();
    if (grad_out.shape() != TensorShape{s.n, out_, 1, 1, 1})
      throw ShapeError(name_ + ": grad_out shape mismatch");

    ConstMapRM W(w_->value.data().data(), Index(out_), Index(in_));
    ConstMapRM X(x.data().data(), Index(s.n), Index(in_));
    ConstMapRM GO(grad_out.data().data(), Index(s.n), Index(out_));
    if (w_->trainable) {
      MapRM GW(w_->grad.data().data(), Index(out_), Index(in_));
      GW.noalias() += GO.transpose() * X;
      MapRM GB(b_->grad.data().data(), 1, Index(out_));
      GB += GO.colwise().sum();
    }
    Tensor grad_in(s);
    MapRM GI(grad_in.data().data(), Index(s.n), Index(in_));
    GI.noalias() = GO * W;
    return grad_in;
  }

 private:
  std::string name_;
  std::int64_t in_, out_;
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  std::optional<Tensor> cache_x_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling (parameter-free).

class Upsample2x {
 public:
  explicit Upsample2x(std::string name) : name_(std::move(name)) {}

  Tensor forward(const Tensor& x) {
    const TensorShape s = x.shape();
    in_shape_ = s;
    Tensor out({s.n, s.c, 2 * s.d, 2 * s.h, 2 * s.w});
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t d = 0; d < s.d; ++d)
          for (std::int64_t h = 0; h < s.h; ++h)
            for (std::int64_t w = 0; w < s.w; ++w) {
              const double v = x.at(n, c, d, h, w);
              for (std::int64_t kd = 0; kd < 2; ++kd)
                for (std::int64_t kh = 0; kh < 2; ++kh)
                  for (std::int64_t kw = 0; kw < 2; ++kw)
                    out.at(n, c, 2 * d + kd, 2 * h + kh, 2 * w + kw) = v;
            }
    return out;
  }

  Tensor backward(const Tensor& grad_out) {
    const TensorShape s = in_shape_;
    if (s.count() == 0) throw StateError(name_ + ": backward without forward");
    if (grad_out.shape() != TensorShape{s.n, s.c, 2 * s.d, 2 * s.h, 2 * s.w})
      throw ShapeError(name_ + ": grad_out shape mismatch");
    Tensor grad_in(s);
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t d = 0; d < s.d; ++d)
          for (std::int64_t h = 0; h < s.h; ++h)
            for (std::int64_t w = 0; w < s.w; ++w) {
              double acc = 0.0;
              for (std::int64_t kd = 0; kd < 2; ++kd)
                for (std::int64_t kh = 0; kh < 2; ++kh)
                  for (std::int64_t kw = 0; kw < 2; ++kw)
                    acc += grad_out.at(n, c, 2 * d + kd, 2 * h + kh, 2 * w + kw);
              grad_in.at(n, c, d, h, w) = acc;
            }
    in_shape_ = {};
    return grad_in;
  }

 private:
  std::string name_;
  TensorShape in_shape_{};
};

}  // namespace wcdiff::nn
