#pragma once

// K-bit weight quantizer Q(w) = v * b with integer codes b and a scale v
// fitted to minimize ||w - v b||^2.
//
// Codebook: {-1, +1} for K = 1, otherwise the symmetric uniform levels
// {-L, ..., L} with L = 2^(K-1) - 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "proxavg/tensor.hpp"

namespace proxavg {

inline void check_bits(int bits) {
  if (bits < 1 || bits > 8) {
    throw std::invalid_argument("quantizer bits must lie in [1,8], got " + std::to_string(bits));
  }
}

/// Largest code magnitude.
inline int max_code(int bits) {
  check_bits(bits);
  return bits == 1 ? 1 : (1 << (bits - 1)) - 1;
}

inline std::vector<int> codebook(int bits) {
  if (bits == 1) return {-1, 1};
  const int L = max_code(bits);
  std::vector<int> levels;
  for (int b = -L; b <= L; ++b) levels.push_back(b);
  return levels;
}

struct QuantizedWeights {
  Tensor values;                   // v * b
  double scale = 0.0;              // v
  std::vector<std::int8_t> codes;  // b
};

inline double quantization_mse(std::span<const double> w, double scale,
                               std::span<const std::int8_t> codes) {
  double e = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - scale * codes[i];
    e += d * d;
  }
  return e / static_cast<double>(w.size());
}

/// Nearest code for w at scale v (clipped to the codebook).
inline std::int8_t nearest_code(double w, double scale, int bits) {
  if (bits == 1) return w >= 0.0 ? std::int8_t{1} : std::int8_t{-1};
  const int L = max_code(bits);
  if (!(scale > 0.0)) return 0;
  const double q = std::floor(w / scale + 0.5);
  return static_cast<std::int8_t>(std::clamp(q, -static_cast<double>(L), static_cast<double>(L)));
}

inline std::vector<std::int8_t> assign_codes(std::span<const double> w, double scale, int bits) {
  std::vector<std::int8_t> b(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) b[i] = nearest_code(w[i], scale, bits);
  return b;
}

/// Least-squares scale for fixed codes: <w,b>/<b,b>, 0 when b == 0.
inline double refit_scale(std::span<const double> w, std::span<const std::int8_t> b) {
  double wb = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    wb += w[i] * b[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return bb > 0.0 ? std::max(wb / bb, 0.0) : 0.0;
}

/// Alternates code assignment and scale refit starting from `scale`.
/// Returns the final scale; `mse_history` (optional) receives the MSE after
/// every alternation. The MSE sequence is non-increasing.
inline double alternate_scale(std::span<const double> w, int bits, double scale,
                              int max_rounds = 10, double tol = 1e-10,
                              std::vector<double>* mse_history = nullptr) {
  auto codes = assign_codes(w, scale, bits);
  double mse = quantization_mse(w, scale, codes);
  for (int round = 0; round < max_rounds; ++round) {
    const double next_scale = refit_scale(w, codes);
    auto next_codes = assign_codes(w, next_scale, bits);
    const double next_mse = quantization_mse(w, next_scale, next_codes);
    if (next_mse > mse) break;
    const double delta = std::abs(next_scale - scale);
    scale = next_scale;
    codes = std::move(next_codes);
    mse = next_mse;
    if (mse_history) mse_history->push_back(mse);
    if (delta <= tol) break;
  }
  return scale;
}

/// Exact MSE-optimal scale for K > 1: the nearest-code map is constant
/// between the breakpoints |w_i| / (k + 1/2), so the global optimum is the
/// best clamped least-squares scale over those intervals.
inline double sweep_optimal_scale(std::span<const double> w, int bits) {
  const int L = max_code(bits);
  std::vector<double> abs_w(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) abs_w[i] = std::abs(w[i]);
  const double wmax = *std::max_element(abs_w.begin(), abs_w.end());
  if (!(wmax > 0.0)) return 0.0;

  // Breakpoint v where code of |w_i| changes from k+1 to k as v grows.
  struct Event {
    double v;
    std::size_t i;
  };
  std::vector<Event> events;
  events.reserve(w.size() * static_cast<std::size_t>(L));
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (abs_w[i] == 0.0) continue;
    for (int k = 0; k < L; ++k) events.push_back({abs_w[i] / (k + 0.5), i});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.v < b.v; });

  // Sweep v from 0+ upward; start with every nonzero weight at code L.
  std::vector<int> code(w.size(), 0);
  double wb = 0.0;
  double bb = 0.0;
  double ww = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    ww += abs_w[i] * abs_w[i];
    if (abs_w[i] > 0.0) {
      code[i] = L;
      wb += abs_w[i] * L;
      bb += static_cast<double>(L) * L;
    }
  }
  double best_v = 0.0;
  double best_err = ww;
  auto consider = [&](double lo, double hi) {
    if (!(bb > 0.0)) return;
    const double v = std::clamp(wb / bb, lo, hi);
    const double err = ww - 2.0 * v * wb + v * v * bb;
    if (err < best_err) {
      best_err = err;
      best_v = v;
    }
  };
  double lo = 0.0;
  for (std::size_t e = 0; e < events.size();) {
    const double hi = events[e].v;
    consider(lo, hi);
    while (e < events.size() && events[e].v == hi) {
      const std::size_t i = events[e].i;
      wb -= abs_w[i];
      bb -= 2.0 * code[i] - 1.0;
      --code[i];
      ++e;
    }
    lo = hi;
  }
  consider(lo, 2.0 * wmax + 1.0);
  return best_v;
}

/// Fits (v, b) to w. K = 1 uses the closed form v = mean|w|, b = sgn(w) with
/// sgn(0) = +1. K > 1 alternates codes and scale, seeded with the exact
/// sweep optimum and with max|w| / L; the lower-MSE result is kept.
inline QuantizedWeights fit_and_quantize(const Tensor& w, int bits) {
  check_bits(bits);
  if (w.empty()) throw std::invalid_argument("fit_and_quantize: empty tensor");
  if (!all_finite(w)) throw std::invalid_argument("fit_and_quantize: non-finite weights");
  const auto data = w.data();
  double scale = 0.0;
  if (bits == 1) {
    double s = 0.0;
    for (double v : data) s += std::abs(v);
    scale = s / static_cast<double>(data.size());
  } else {
    double wmax = 0.0;
    for (double v : data) wmax = std::max(wmax, std::abs(v));
    if (wmax > 0.0) {
      const double from_max = alternate_scale(data, bits, wmax / max_code(bits));
      const double from_sweep = alternate_scale(data, bits, sweep_optimal_scale(data, bits));
      const double e_max = quantization_mse(data, from_max, assign_codes(data, from_max, bits));
      const double e_sweep =
          quantization_mse(data, from_sweep, assign_codes(data, from_sweep, bits));
      scale = e_sweep <= e_max ? from_sweep : from_max;
    }
  }
  QuantizedWeights q;
  q.scale = scale;
  q.codes = assign_codes(data, scale, bits);
  q.values = Tensor::zeros_like(w);
  for (std::size_t i = 0; i < q.codes.size(); ++i) q.values[i] = scale * q.codes[i];
  return q;
}

}  // namespace proxavg
