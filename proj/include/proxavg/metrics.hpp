#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "proxavg/tensor.hpp"

namespace proxavg {

/// Reported for identical inputs instead of +inf.
inline constexpr double kPsnrCap = 100.0;

inline double mean_squared_error(const Tensor& x, const Tensor& ref) {
  if (x.size() != ref.size()) throw std::invalid_argument("mse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - ref[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

/// 10 log10(peak^2 / MSE), capped at 100 dB.
inline double psnr(const Tensor& x, const Tensor& ref, double peak = 1.0) {
  if (!x.same_shape(ref)) throw std::invalid_argument("psnr: shape mismatch");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
  const double mse = mean_squared_error(x, ref);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::array<double, kSsimWindow> ssim_gaussian_taps() {
  std::array<double, kSsimWindow> taps{};
  const double c = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - c;
    taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> image_dims(const Tensor& t) {
  if (t.rank() == 2) return {t.extent(0), t.extent(1)};
  if (t.rank() == 3 && t.extent(0) == 1) return {t.extent(1), t.extent(2)};
  throw std::invalid_argument("expected a grayscale image [H,W] or [1,H,W], got " +
                              shape_string(t.shape()));
}

// Separable valid-mode Gaussian filter of a h x w plane.
inline std::vector<double> gaussian_valid(const std::vector<double>& src, std::size_t h,
                                          std::size_t w) {
  const auto taps = ssim_gaussian_taps();
  const std::size_t ow = w - kSsimWindow + 1;
  const std::size_t oh = h - kSsimWindow + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < kSsimWindow; ++t) acc += taps[t] * src[i * w + j + t];
      rows[i * ow + j] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < kSsimWindow; ++t) acc += taps[t] * rows[(i + t) * ow + j];
      out[i * ow + j] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, K1 0.01,
/// K2 0.03, dynamic range 1).
inline double ssim(const Tensor& x, const Tensor& ref) {
  const auto [h, w] = detail::image_dims(x);
  const auto [rh, rw] = detail::image_dims(ref);
  if (h != rh || w != rw) throw std::invalid_argument("ssim: shape mismatch");
  if (h < kSsimWindow || w < kSsimWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  std::vector<double> a(x.data().begin(), x.data().end());
  std::vector<double> b(ref.data().begin(), ref.data().end());
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = detail::gaussian_valid(a, h, w);
  const auto mu_b = detail::gaussian_valid(b, h, w);
  const auto e_aa = detail::gaussian_valid(aa, h, w);
  const auto e_bb = detail::gaussian_valid(bb, h, w);
  const auto e_ab = detail::gaussian_valid(ab, h, w);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace proxavg
