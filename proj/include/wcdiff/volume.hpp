#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wcdiff/error.hpp"

namespace wcdiff {

enum class Unit : std::uint8_t { Suv = 0, Normalized = 1, Arbitrary = 2 };

inline const char* unit_name(Unit u) {
  switch (u) {
    case Unit::Suv: return "SUV";
    case Unit::Normalized: return "normalized";
    case Unit::Arbitrary: return "arbitrary";
  }
  return "?";
}

struct Dims3 {
  std::int64_t d = 0, h = 0, w = 0;

  std::int64_t count() const { return d * h * w; }
  bool operator==(const Dims3&) const = default;
  bool positive() const { return d > 0 && h > 0 && w > 0; }
  bool even() const { return d % 2 == 0 && h % 2 == 0 && w % 2 == 0; }
  Dims3 halved() const { return {d / 2, h / 2, w / 2}; }
  std::string str() const {
    return std::to_string(d) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

// Dense 3D scalar grid, row-major with width fastest. Immutable after
// construction; all pipeline steps produce fresh volumes.
template <typename Scalar>
class VolumeT {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  VolumeT() = default;

  VolumeT(Dims3 dims, Array data, Unit unit = Unit::Arbitrary)
      : dims_(dims), unit_(unit), data_(std::move(data)) {
    if (!dims_.positive()) throw ShapeError("volume dims must be positive, got " + dims_.str());
    if (data_.size() != dims_.count())
      throw ShapeError("volume data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_.str());
    if (!data_.allFinite()) throw NumericError("volume contains NaN/Inf");
  }

  static VolumeT zeros(Dims3 dims, Unit unit = Unit::Arbitrary) {
    return VolumeT(dims, Array::Zero(dims.count()), unit);
  }
  static VolumeT constant(Dims3 dims, Scalar value, Unit unit = Unit::Arbitrary) {
    return VolumeT(dims, Array::Constant(dims.count(), value), unit);
  }

  const Dims3& dims() const { return dims_; }
  std::int64_t depth() const { return dims_.d; }
  std::int64_t height() const { return dims_.h; }
  std::int64_t width() const { return dims_.w; }
  std::int64_t size() const { return data_.size(); }
  Unit unit() const { return unit_; }

  const Array& data() const { return data_; }

  std::int64_t index(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return (d * dims_.h + h) * dims_.w + w;
  }
  Scalar operator()(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return data_[index(d, h, w)];
  }

  VolumeT with_unit(Unit u) const { return VolumeT(dims_, data_, u); }

 private:
  Dims3 dims_;
  Unit unit_ = Unit::Arbitrary;
  Array data_;
};

using Volume = VolumeT<double>;

// ---------------------------------------------------------------------------
// Patch extraction / stitching

struct PatchGrid {
  Dims3 patch;
  Dims3 stride;
  std::vector<Dims3> origins;  // ascending lexicographic (depth, height, width)
};

namespace detail {

inline std::vector<std::int64_t> axis_origins(std::int64_t dim, std::int64_t patch,
                                              std::int64_t stride) {
  std::vector<std::int64_t> origins;
  for (std::int64_t o = 0; o + patch <= dim; o += stride) origins.push_back(o);
  if (origins.back() != dim - patch) origins.push_back(dim - patch);
  return origins;
}

// Raised-cosine blend weights, lifted so every in-patch weight is positive.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> blend_window(std::int64_t n) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> w(n);
  if (n == 1) {
    w[0] = Scalar(1);
    return w;
  }
  const double two_pi = 6.283185307179586476925286766559;
  for (std::int64_t i = 0; i < n; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(two_pi * double(i) / double(n - 1));
    w[i] = Scalar(0.05 + 0.95 * hann);
  }
  return w;
}

}  // namespace detail

template <typename Scalar>
std::pair<PatchGrid, std::vector<VolumeT<Scalar>>> extract_patches(const VolumeT<Scalar>& vol,
                                                                   Dims3 patch, Dims3 overlap) {
  const Dims3 vd = vol.dims();
  if (!patch.positive()) throw ShapeError("patch dims must be positive");
  if (patch.d > vd.d || patch.h > vd.h || patch.w > vd.w)
    throw ShapeError("patch " + patch.str() + " exceeds volume " + vd.str());
  if (overlap.d < 0 || overlap.h < 0 || overlap.w < 0 || overlap.d >= patch.d ||
      overlap.h >= patch.h || overlap.w >= patch.w)
    throw UsageError("overlap must satisfy 0 <= overlap < patch per axis");

  PatchGrid grid;
  grid.patch = patch;
  grid.stride = {patch.d - overlap.d, patch.h - overlap.h, patch.w - overlap.w};
  const auto od = detail::axis_origins(vd.d, patch.d, grid.stride.d);
  const auto oh = detail::axis_origins(vd.h, patch.h, grid.stride.h);
  const auto ow = detail::axis_origins(vd.w, patch.w, grid.stride.w);
  for (auto d : od)
    for (auto h : oh)
      for (auto w : ow) grid.origins.push_back({d, h, w});

  std::vector<VolumeT<Scalar>> patches;
  patches.reserve(grid.origins.size());
  for (const auto& org : grid.origins) {
    typename VolumeT<Scalar>::Array data(patch.count());
    std::int64_t i = 0;
    for (std::int64_t d = 0; d < patch.d; ++d)
      for (std::int64_t h = 0; h < patch.h; ++h)
        for (std::int64_t w = 0; w < patch.w; ++w)
          data[i++] = vol(org.d + d, org.h + h, org.w + w);
    patches.emplace_back(patch, std::move(data), vol.unit());
  }
  return {std::move(grid), std::move(patches)};
}

template <typename Scalar>
VolumeT<Scalar> stitch_patches(const PatchGrid& grid, const std::vector<VolumeT<Scalar>>& patches,
                               Dims3 out_dims) {
  if (patches.size() != grid.origins.size())
    throw ShapeError("patch count does not match grid origin count");
  if (!out_dims.positive()) throw ShapeError("output dims must be positive");

  using Array = typename VolumeT<Scalar>::Array;
  Array acc = Array::Zero(out_dims.count());
  Array weight = Array::Zero(out_dims.count());

  const auto wd = detail::blend_window<Scalar>(grid.patch.d);
  const auto wh = detail::blend_window<Scalar>(grid.patch.h);
  const auto ww = detail::blend_window<Scalar>(grid.patch.w);

  Unit unit = patches.empty() ? Unit::Arbitrary : patches.front().unit();
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const auto& org = grid.origins[p];
    const auto& pv = patches[p];
    if (pv.dims() != grid.patch) throw ShapeError("patch dims do not match grid patch size");
    if (org.d + grid.patch.d > out_dims.d || org.h + grid.patch.h > out_dims.h ||
        org.w + grid.patch.w > out_dims.w)
      throw ShapeError("patch origin outside output volume");
    for (std::int64_t d = 0; d < grid.patch.d; ++d)
      for (std::int64_t h = 0; h < grid.patch.h; ++h) {
        const Scalar wdh = wd[d] * wh[h];
        const std::int64_t base = ((org.d + d) * out_dims.h + (org.h + h)) * out_dims.w + org.w;
        for (std::int64_t w = 0; w < grid.patch.w; ++w) {
          const Scalar wt = wdh * ww[w];
          acc[base + w] += wt * pv(d, h, w);
          weight[base + w] += wt;
        }
      }
  }

  if ((weight <= Scalar(0)).any())
    throw ShapeError("stitch: output voxel not covered by any patch");
  return VolumeT<Scalar>(out_dims, acc / weight, unit);
}

// ---------------------------------------------------------------------------
// Normalization to [-1, 1]

struct NormStats {
  double lo = 0.0;
  double hi = 1.0;
};

template <typename Scalar>
struct NormalizeResult {
  VolumeT<Scalar> volume;
  std::int64_t clipped = 0;  // voxels outside [lo, hi] before mapping
};

template <typename Scalar>
NormalizeResult<Scalar> normalize(const VolumeT<Scalar>& vol, const NormStats& stats) {
  if (!(stats.hi > stats.lo)) throw UsageError("normalize: requires hi > lo");
  const Scalar lo = Scalar(stats.lo), hi = Scalar(stats.hi);
  typename VolumeT<Scalar>::Array clipped = vol.data().min(hi).max(lo);
  const std::int64_t n_clipped = (vol.data() < lo).count() + (vol.data() > hi).count();
  typename VolumeT<Scalar>::Array out =
      (clipped - lo) / (hi - lo) * Scalar(2) - Scalar(1);
  return {VolumeT<Scalar>(vol.dims(), std::move(out), Unit::Normalized), n_clipped};
}

template <typename Scalar>
VolumeT<Scalar> denormalize(const VolumeT<Scalar>& vol, const NormStats& stats,
                            Unit unit = Unit::Arbitrary) {
  if (!(stats.hi > stats.lo)) throw UsageError("denormalize: requires hi > lo");
  const Scalar lo = Scalar(stats.lo), hi = Scalar(stats.hi);
  typename VolumeT<Scalar>::Array out =
      (vol.data() + Scalar(1)) * Scalar(0.5) * (hi - lo) + lo;
  return VolumeT<Scalar>(vol.dims(), std::move(out), unit);
}

}  // namespace wcdiff
