#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wcdiff/volume.hpp"

namespace wcdiff {

// Band index packs the filter choice per axis: bit 2 = depth, bit 1 = height,
// bit 0 = width; 0 = low-pass, 1 = high-pass. Names read (depth, height,
// width), so band 3 = LHH.
constexpr int kNumBands = 8;

inline std::string band_name(int b) {
  std::string s(3, 'L');
  if (b & 4) s[0] = 'H';
  if (b & 2) s[1] = 'H';
  if (b & 1) s[2] = 'H';
  return s;
}

inline int band_index(const std::string& name) {
  if (name.size() != 3) throw UsageError("bad subband name: " + name);
  int b = 0;
  for (int i = 0; i < 3; ++i) {
    if (name[i] == 'H')
      b |= 4 >> i;
    else if (name[i] != 'L')
      throw UsageError("bad subband name: " + name);
  }
  return b;
}

template <typename Scalar>
struct SubbandSetT {
  Dims3 source_dims;
  std::array<VolumeT<Scalar>, kNumBands> bands;
};

using SubbandSet = SubbandSetT<double>;

namespace detail {

// In-place orthonormal Haar butterfly along one axis: pairs (2j, 2j+1) map to
// (lo, hi) = ((a+b)/sqrt2, (a-b)/sqrt2), lows packed before highs.
template <typename Scalar>
void haar_axis_forward(Eigen::Array<Scalar, Eigen::Dynamic, 1>& a, Dims3 dims, int axis) {
  const std::int64_t n = axis == 0 ? dims.d : axis == 1 ? dims.h : dims.w;
  const std::int64_t stride = axis == 0 ? dims.h * dims.w : axis == 1 ? dims.w : 1;
  const Scalar r = Scalar(1) / Scalar(std::sqrt(2.0));
  std::vector<Scalar> line(static_cast<std::size_t>(n));

  auto process = [&](std::int64_t start) {
    for (std::int64_t j = 0; j < n / 2; ++j) {
      const Scalar x0 = a[start + (2 * j) * stride];
      const Scalar x1 = a[start + (2 * j + 1) * stride];
      line[static_cast<std::size_t>(j)] = (x0 + x1) * r;
      line[static_cast<std::size_t>(n / 2 + j)] = (x0 - x1) * r;
    }
    for (std::int64_t j = 0; j < n; ++j) a[start + j * stride] = line[static_cast<std::size_t>(j)];
  };

  if (axis == 0) {
    for (std::int64_t h = 0; h < dims.h; ++h)
      for (std::int64_t w = 0; w < dims.w; ++w) process(h * dims.w + w);
  } else if (axis == 1) {
    for (std::int64_t d = 0; d < dims.d; ++d)
      for (std::int64_t w = 0; w < dims.w; ++w) process(d * dims.h * dims.w + w);
  } else {
    for (std::int64_t d = 0; d < dims.d; ++d)
      for (std::int64_t h = 0; h < dims.h; ++h) process((d * dims.h + h) * dims.w);
  }
}

template <typename Scalar>
void haar_axis_inverse(Eigen::Array<Scalar, Eigen::Dynamic, 1>& a, Dims3 dims, int axis) {
  const std::int64_t n = axis == 0 ? dims.d : axis == 1 ? dims.h : dims.w;
  const std::int64_t stride = axis == 0 ? dims.h * dims.w : axis == 1 ? dims.w : 1;
  const Scalar r = Scalar(1) / Scalar(std::sqrt(2.0));
  std::vector<Scalar> line(static_cast<std::size_t>(n));

  auto process = [&](std::int64_t start) {
    for (std::int64_t j = 0; j < n / 2; ++j) {
      const Scalar lo = a[start + j * stride];
      const Scalar hi = a[start + (n / 2 + j) * stride];
      line[static_cast<std::size_t>(2 * j)] = (lo + hi) * r;
      line[static_cast<std::size_t>(2 * j + 1)] = (lo - hi) * r;
    }
    for (std::int64_t j = 0; j < n; ++j) a[start + j * stride] = line[static_cast<std::size_t>(j)];
  };

  if (axis == 0) {
    for (std::int64_t h = 0; h < dims.h; ++h)
      for (std::int64_t w = 0; w < dims.w; ++w) process(h * dims.w + w);
  } else if (axis == 1) {
    for (std::int64_t d = 0; d < dims.d; ++d)
      for (std::int64_t w = 0; w < dims.w; ++w) process(d * dims.h * dims.w + w);
  } else {
    for (std::int64_t d = 0; d < dims.d; ++d)
      for (std::int64_t h = 0; h < dims.h; ++h) process((d * dims.h + h) * dims.w);
  }
}

}  // namespace detail

template <typename Scalar>
SubbandSetT<Scalar> dwt3(const VolumeT<Scalar>& vol) {
  const Dims3 dims = vol.dims();
  if (!dims.even())
    throw ShapeError("dwt3 requires even dims along every axis, got " + dims.str());

  Eigen::Array<Scalar, Eigen::Dynamic, 1> a = vol.data();
  detail::haar_axis_forward(a, dims, 0);
  detail::haar_axis_forward(a, dims, 1);
  detail::haar_axis_forward(a, dims, 2);

  const Dims3 half = dims.halved();
  SubbandSetT<Scalar> out;
  out.source_dims = dims;
  for (int b = 0; b < kNumBands; ++b) {
    const std::int64_t od = (b & 4) ? half.d : 0;
    const std::int64_t oh = (b & 2) ? half.h : 0;
    const std::int64_t ow = (b & 1) ? half.w : 0;
    typename VolumeT<Scalar>::Array band(half.count());
    std::int64_t i = 0;
    for (std::int64_t d = 0; d < half.d; ++d)
      for (std::int64_t h = 0; h < half.h; ++h)
        for (std::int64_t w = 0; w < half.w; ++w)
          band[i++] = a[((od + d) * dims.h + (oh + h)) * dims.w + (ow + w)];
    out.bands[static_cast<std::size_t>(b)] = VolumeT<Scalar>(half, std::move(band), vol.unit());
  }
  return out;
}

template <typename Scalar>
VolumeT<Scalar> idwt3(const SubbandSetT<Scalar>& set) {
  const Dims3 dims = set.source_dims;
  if (!dims.positive() || !dims.even())
    throw ShapeError("idwt3: bad source dims " + dims.str());
  const Dims3 half = dims.halved();
  for (int b = 0; b < kNumBands; ++b)
    if (set.bands[static_cast<std::size_t>(b)].dims() != half)
      throw ShapeError("idwt3: band " + band_name(b) + " dims " +
                       set.bands[static_cast<std::size_t>(b)].dims().str() +
                       " do not match expected " + half.str());

  Eigen::Array<Scalar, Eigen::Dynamic, 1> a(dims.count());
  for (int b = 0; b < kNumBands; ++b) {
    const std::int64_t od = (b & 4) ? half.d : 0;
    const std::int64_t oh = (b & 2) ? half.h : 0;
    const std::int64_t ow = (b & 1) ? half.w : 0;
    const auto& band = set.bands[static_cast<std::size_t>(b)];
    for (std::int64_t d = 0; d < half.d; ++d)
      for (std::int64_t h = 0; h < half.h; ++h)
        for (std::int64_t w = 0; w < half.w; ++w)
          a[((od + d) * dims.h + (oh + h)) * dims.w + (ow + w)] = band(d, h, w);
  }

  detail::haar_axis_inverse(a, dims, 2);
  detail::haar_axis_inverse(a, dims, 1);
  detail::haar_axis_inverse(a, dims, 0);
  return VolumeT<Scalar>(dims, std::move(a), set.bands[0].unit());
}

// ---------------------------------------------------------------------------
// Subband selection

enum class SelectorMode { LLL, HHH, AllHigh, AllLow, AllBands, Custom };

struct SubbandSelector {
  SelectorMode mode = SelectorMode::LLL;
  std::array<bool, kNumBands> mask{};  // used when mode == Custom

  std::vector<int> selected() const {
    std::vector<int> out;
    switch (mode) {
      case SelectorMode::LLL: out = {0}; break;
      case SelectorMode::HHH: out = {7}; break;
      case SelectorMode::AllHigh:
        for (int b = 1; b < kNumBands; ++b) out.push_back(b);
        break;
      case SelectorMode::AllLow:
        for (int b = 0; b < 7; ++b) out.push_back(b);
        break;
      case SelectorMode::AllBands:
        for (int b = 0; b < kNumBands; ++b) out.push_back(b);
        break;
      case SelectorMode::Custom:
        for (int b = 0; b < kNumBands; ++b)
          if (mask[static_cast<std::size_t>(b)]) out.push_back(b);
        break;
    }
    if (out.empty()) throw UsageError("subband selector selects no bands");
    return out;
  }

  std::string str() const {
    switch (mode) {
      case SelectorMode::LLL: return "LLL";
      case SelectorMode::HHH: return "HHH";
      case SelectorMode::AllHigh: return "AllHigh";
      case SelectorMode::AllLow: return "AllLow";
      case SelectorMode::AllBands: return "AllBands";
      case SelectorMode::Custom: {
        std::string s = "custom:";
        bool first = true;
        for (int b = 0; b < kNumBands; ++b)
          if (mask[static_cast<std::size_t>(b)]) {
            if (!first) s += ",";
            s += band_name(b);
            first = false;
          }
        return s;
      }
    }
    return "?";
  }
};

inline SubbandSelector parse_selector(const std::string& text) {
  SubbandSelector sel;
  if (text == "LLL") {
    sel.mode = SelectorMode::LLL;
  } else if (text == "HHH") {
    sel.mode = SelectorMode::HHH;
  } else if (text == "AllHigh") {
    sel.mode = SelectorMode::AllHigh;
  } else if (text == "AllLow") {
    sel.mode = SelectorMode::AllLow;
  } else if (text == "AllBands") {
    sel.mode = SelectorMode::AllBands;
  } else if (text.rfind("custom:", 0) == 0) {
    sel.mode = SelectorMode::Custom;
    std::string rest = text.substr(7);
    std::size_t pos = 0;
    while (pos < rest.size()) {
      std::size_t comma = rest.find(',', pos);
      if (comma == std::string::npos) comma = rest.size();
      sel.mask[static_cast<std::size_t>(band_index(rest.substr(pos, comma - pos)))] = true;
      pos = comma + 1;
    }
    sel.selected();  // validates non-empty
  } else {
    throw UsageError("unknown subband selector: " + text +
                     " (expected LLL, HHH, AllHigh, AllLow, AllBands, or custom:<names>)");
  }
  return sel;
}

// Voxel-wise mean of the selected subbands.
template <typename Scalar>
VolumeT<Scalar> select_prior(const SubbandSetT<Scalar>& set, const SubbandSelector& sel) {
  const auto chosen = sel.selected();
  const Dims3 half = set.bands[0].dims();
  typename VolumeT<Scalar>::Array acc =
      VolumeT<Scalar>::Array::Zero(half.count());
  for (int b : chosen) {
    const auto& band = set.bands[static_cast<std::size_t>(b)];
    if (band.dims() != half) throw ShapeError("select_prior: inconsistent subband dims");
    acc += band.data();
  }
  acc /= Scalar(chosen.size());
  return VolumeT<Scalar>(half, std::move(acc), Unit::Arbitrary);
}

}  // namespace wcdiff
