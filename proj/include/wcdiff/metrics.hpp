#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "wcdiff/volume.hpp"

namespace wcdiff {

namespace detail {

template <typename Scalar>
void check_pair(const VolumeT<Scalar>& pred, const VolumeT<Scalar>& ref, const char* op) {
  if (pred.size() == 0 || ref.size() == 0) throw UsageError(std::string(op) + ": empty volume");
  if (pred.dims() != ref.dims())
    throw ShapeError(std::string(op) + ": dims " + pred.dims().str() + " vs " + ref.dims().str());
}

template <typename Scalar>
Scalar auto_range(const VolumeT<Scalar>& ref) {
  const Scalar r = ref.data().maxCoeff() - ref.data().minCoeff();
  return r > Scalar(0) ? r : Scalar(1);
}

// Sliding-window sums over all fully contained window positions, one
// separable accumulation pass per axis.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> window_sums(
    const Eigen::Array<Scalar, Eigen::Dynamic, 1>& a, Dims3 dims, std::int64_t win) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Array cur = a;
  Dims3 cd = dims;
  for (int axis = 2; axis >= 0; --axis) {
    const std::int64_t n = axis == 0 ? cd.d : axis == 1 ? cd.h : cd.w;
    const std::int64_t on = n - win + 1;
    Dims3 od = cd;
    (axis == 0 ? od.d : axis == 1 ? od.h : od.w) = on;
    Array next(od.count());
    const std::int64_t stride = axis == 0 ? cd.h * cd.w : axis == 1 ? cd.w : 1;
    const std::int64_t ostride = axis == 0 ? od.h * od.w : axis == 1 ? od.w : 1;
    auto line = [&](std::int64_t in_start, std::int64_t out_start) {
      Scalar s = 0;
      for (std::int64_t i = 0; i < win; ++i) s += cur[in_start + i * stride];
      next[out_start] = s;
      for (std::int64_t o = 1; o < on; ++o) {
        s += cur[in_start + (o + win - 1) * stride] - cur[in_start + (o - 1) * stride];
        next[out_start + o * ostride] = s;
      }
    };
    if (axis == 0) {
      for (std::int64_t h = 0; h < cd.h; ++h)
        for (std::int64_t w = 0; w < cd.w; ++w) line(h * cd.w + w, h * od.w + w);
    } else if (axis == 1) {
      for (std::int64_t d = 0; d < cd.d; ++d)
        for (std::int64_t w = 0; w < cd.w; ++w)
          line(d * cd.h * cd.w + w, d * od.h * od.w + w);
    } else {
      for (std::int64_t d = 0; d < cd.d; ++d)
        for (std::int64_t h = 0; h < cd.h; ++h)
          line((d * cd.h + h) * cd.w, (d * od.h + h) * od.w);
    }
    cur = std::move(next);
    cd = od;
  }
  return cur;
}

}  // namespace detail

template <typename Scalar>
double psnr(const VolumeT<Scalar>& pred, const VolumeT<Scalar>& ref, double data_range = 0.0) {
  detail::check_pair(pred, ref, "psnr");
  const double mse = double((pred.data() - ref.data()).square().sum()) / double(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double range = data_range > 0.0 ? data_range : double(detail::auto_range(ref));
  if (!(range > 0.0)) throw UsageError("psnr: data_range must be positive");
  return 10.0 * std::log10(range * range / mse);
}

struct SsimOptions {
  std::int64_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 0.0;  // 0: max(ref) - min(ref)
  bool gaussian = false;    // uniform window by default
  double sigma = 1.5;
};

// Mean SSIM over all fully contained 3D windows, population window statistics.
template <typename Scalar>
double ssim3(const VolumeT<Scalar>& pred, const VolumeT<Scalar>& ref, SsimOptions opt = {}) {
  detail::check_pair(pred, ref, "ssim3");
  const Dims3 dims = ref.dims();
  const std::int64_t win = opt.window;
  if (win < 1 || win > dims.d || win > dims.h || win > dims.w)
    throw UsageError("ssim3: window " + std::to_string(win) + " does not fit in " + dims.str());

  const double L = opt.data_range > 0.0 ? opt.data_range : double(detail::auto_range(ref));
  const double c1 = (opt.k1 * L) * (opt.k1 * L);
  const double c2 = (opt.k2 * L) * (opt.k2 * L);

  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Array& x = pred.data();
  const Array& y = ref.data();

  if (!opt.gaussian) {
    const double m = double(win) * double(win) * double(win);
    const Array sx = detail::window_sums<Scalar>(x, dims, win);
    const Array sy = detail::window_sums<Scalar>(y, dims, win);
    const Array sxx = detail::window_sums<Scalar>(x * x, dims, win);
    const Array syy = detail::window_sums<Scalar>(y * y, dims, win);
    const Array sxy = detail::window_sums<Scalar>(x * y, dims, win);
    double acc = 0.0;
    for (std::int64_t i = 0; i < sx.size(); ++i) {
      const double mx = double(sx[i]) / m, my = double(sy[i]) / m;
      const double vx = double(sxx[i]) / m - mx * mx;
      const double vy = double(syy[i]) / m - my * my;
      const double cxy = double(sxy[i]) / m - mx * my;
      acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    return acc / double(sx.size());
  }

  // Gaussian-weighted window (config alternative): direct evaluation.
  std::vector<double> w1(static_cast<std::size_t>(win));
  const double center = double(win - 1) / 2.0;
  for (std::int64_t i = 0; i < win; ++i)
    w1[std::size_t(i)] = std::exp(-0.5 * std::pow((double(i) - center) / opt.sigma, 2.0));
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t d0 = 0; d0 + win <= dims.d; ++d0)
    for (std::int64_t h0 = 0; h0 + win <= dims.h; ++h0)
      for (std::int64_t w0 = 0; w0 + win <= dims.w; ++w0, ++count) {
        double wsum = 0, mx = 0, my = 0, vxx = 0, vyy = 0, vxy = 0;
        for (std::int64_t d = 0; d < win; ++d)
          for (std::int64_t h = 0; h < win; ++h)
            for (std::int64_t w = 0; w < win; ++w) {
              const double wt = w1[std::size_t(d)] * w1[std::size_t(h)] * w1[std::size_t(w)];
              const double xv = double(pred(d0 + d, h0 + h, w0 + w));
              const double yv = double(ref(d0 + d, h0 + h, w0 + w));
              wsum += wt;
              mx += wt * xv;
              my += wt * yv;
              vxx += wt * xv * xv;
              vyy += wt * yv * yv;
              vxy += wt * xv * yv;
            }
        mx /= wsum;
        my /= wsum;
        const double vx = vxx / wsum - mx * mx;
        const double vy = vyy / wsum - my * my;
        const double cxy = vxy / wsum - mx * my;
        acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
  return acc / double(count);
}

// Gradient magnitude from 3D Prewitt operators: central difference along one
// axis, 3x3 box smoothing (1/9) across the other two. Defined on interior
// voxels only.
template <typename Scalar>
VolumeT<Scalar> prewitt_gradient_magnitude(const VolumeT<Scalar>& vol) {
  const Dims3 dims = vol.dims();
  if (dims.d < 3 || dims.h < 3 || dims.w < 3)
    throw UsageError("prewitt: volume must be at least 3 voxels per axis, got " + dims.str());
  const Dims3 od{dims.d - 2, dims.h - 2, dims.w - 2};
  typename VolumeT<Scalar>::Array out(od.count());

  std::int64_t i = 0;
  for (std::int64_t d = 1; d + 1 < dims.d; ++d)
    for (std::int64_t h = 1; h + 1 < dims.h; ++h)
      for (std::int64_t w = 1; w + 1 < dims.w; ++w, ++i) {
        Scalar gd = 0, gh = 0, gw = 0;
        for (std::int64_t a = -1; a <= 1; ++a)
          for (std::int64_t b = -1; b <= 1; ++b) {
            gd += vol(d + 1, h + a, w + b) - vol(d - 1, h + a, w + b);
            gh += vol(d + a, h + 1, w + b) - vol(d + a, h - 1, w + b);
            gw += vol(d + a, h + b, w + 1) - vol(d + a, h + b, w - 1);
          }
        gd /= Scalar(9);
        gh /= Scalar(9);
        gw /= Scalar(9);
        out[i] = std::sqrt(gd * gd + gh * gh + gw * gw);
      }
  return VolumeT<Scalar>(od, std::move(out), Unit::Arbitrary);
}

// Standard deviation (population) of the gradient magnitude similarity map.
template <typename Scalar>
double gmsd(const VolumeT<Scalar>& pred, const VolumeT<Scalar>& ref,
            std::optional<double> c = std::nullopt) {
  detail::check_pair(pred, ref, "gmsd");
  const double cc = c ? *c
                      : 170.0 * std::pow(double(detail::auto_range(ref)) / 255.0, 2.0);
  const VolumeT<Scalar> gp = prewitt_gradient_magnitude(pred);
  const VolumeT<Scalar> gr = prewitt_gradient_magnitude(ref);
  Eigen::ArrayXd gms(gp.size());
  for (std::int64_t i = 0; i < gp.size(); ++i) {
    const double a = double(gp.data()[i]), b = double(gr.data()[i]);
    gms[i] = (2.0 * a * b + cc) / (a * a + b * b + cc);
  }
  const double mean = gms.mean();
  return std::sqrt((gms - mean).square().sum() / double(gms.size()));
}

template <typename Scalar>
double nmae(const VolumeT<Scalar>& pred, const VolumeT<Scalar>& ref) {
  detail::check_pair(pred, ref, "nmae");
  const double denom = double(ref.data().abs().sum());
  if (denom == 0.0) throw NumericError("nmae: all-zero reference");
  return double((pred.data() - ref.data()).abs().sum()) / denom;
}

}  // namespace wcdiff
