#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>

#include "wcdiff/error.hpp"
#include "wcdiff/volume.hpp"

namespace wcdiff {

struct TensorShape {
  std::int64_t n = 0, c = 0, d = 0, h = 0, w = 0;

  std::int64_t count() const { return n * c * d * h * w; }
  std::int64_t spatial() const { return d * h * w; }
  Dims3 dims3() const { return {d, h, w}; }
  bool operator==(const TensorShape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(d) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Mutable rank-5 activation tensor (batch, channel, depth, height, width),
// row-major with width fastest. Double precision throughout the net.
class Tensor {
 public:
  Tensor() = default;
  Tensor(TensorShape shape, Eigen::ArrayXd data) : shape_(shape), data_(std::move(data)) {
    if (shape_.count() != data_.size())
      throw ShapeError("tensor data length does not match shape " + shape_.str());
  }
  explicit Tensor(TensorShape shape) : shape_(shape), data_(Eigen::ArrayXd::Zero(shape.count())) {
    if (shape.n < 1 || shape.c < 1 || shape.d < 1 || shape.h < 1 || shape.w < 1)
      throw ShapeError("tensor shape must be positive, got " + shape.str());
  }

  static Tensor zeros(TensorShape shape) { return Tensor(shape); }

  const TensorShape& shape() const { return shape_; }
  std::int64_t size() const { return data_.size(); }
  Eigen::ArrayXd& data() { return data_; }
  const Eigen::ArrayXd& data() const { return data_; }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t d, std::int64_t h,
                     std::int64_t w) const {
    return (((n * shape_.c + c) * shape_.d + d) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::int64_t n, std::int64_t c, std::int64_t d, std::int64_t h, std::int64_t w) {
    return data_[index(n, c, d, h, w)];
  }
  double at(std::int64_t n, std::int64_t c, std::int64_t d, std::int64_t h, std::int64_t w) const {
    return data_[index(n, c, d, h, w)];
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  TensorShape shape_;
  Eigen::ArrayXd data_;
};

inline Tensor tensor_from_volume(const Volume& vol) {
  const Dims3 d = vol.dims();
  return Tensor({1, 1, d.d, d.h, d.w}, vol.data());
}

inline Volume volume_from_tensor(const Tensor& t, Unit unit = Unit::Arbitrary) {
  const TensorShape s = t.shape();
  if (s.n != 1 || s.c != 1)
    throw ShapeError("tensor " + s.str() + " is not a single-channel single-batch volume");
  return Volume(s.dims3(), t.data(), unit);
}

// Concatenate along the channel axis.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const TensorShape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.d != sb.d || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("channel concat: shapes " + sa.str() + " and " + sb.str() + " disagree");
  TensorShape out_shape = sa;
  out_shape.c = sa.c + sb.c;
  Tensor out(out_shape);
  const std::int64_t sp = sa.spatial();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    out.data().segment(out.index(n, 0, 0, 0, 0), sa.c * sp) =
        a.data().segment(a.index(n, 0, 0, 0, 0), sa.c * sp);
    out.data().segment(out.index(n, sa.c, 0, 0, 0), sb.c * sp) =
        b.data().segment(b.index(n, 0, 0, 0, 0), sb.c * sp);
  }
  return out;
}

// Extract channels [c0, c0+nc) into a fresh tensor.
inline Tensor slice_channels(const Tensor& t, std::int64_t c0, std::int64_t nc) {
  const TensorShape s = t.shape();
  if (c0 < 0 || nc < 1 || c0 + nc > s.c)
    throw ShapeError("channel slice [" + std::to_string(c0) + "," + std::to_string(c0 + nc) +
                     ") out of range for " + s.str());
  TensorShape out_shape = s;
  out_shape.c = nc;
  Tensor out(out_shape);
  const std::int64_t sp = s.spatial();
  for (std::int64_t n = 0; n < s.n; ++n)
    out.data().segment(out.index(n, 0, 0, 0, 0), nc * sp) =
        t.data().segment(t.index(n, c0, 0, 0, 0), nc * sp);
  return out;
}

}  // namespace wcdiff
