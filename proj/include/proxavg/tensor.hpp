#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace proxavg {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

/// Dense row-major array of doubles.
///
/// A default-constructed tensor is empty (rank 0, no data) and is only a
/// placeholder; every other tensor has positive extents and exactly
/// product(shape) elements.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_volume(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_volume(shape_)) {
      throw std::invalid_argument("Tensor: shape " + shape_string(shape_) +
                                  " needs " +
                                  std::to_string(shape_volume(shape_)) +
                                  " values, got " +
                                  std::to_string(data_.size()));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Multi-index access; the number of indices must equal rank().
  template <class... Idx>
  double& operator()(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... Idx>
  double operator()(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Same data, new shape of equal volume.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  void require_same_shape(const Tensor& o, const char* what) const {
    if (shape_ != o.shape_) {
      throw std::invalid_argument(std::string("Tensor ") + what +
                                  ": shape mismatch " + shape_string(shape_) +
                                  " vs " + shape_string(o.shape_));
    }
  }

 private:
  void check_extents() const {
    if (shape_.empty()) throw std::invalid_argument("Tensor: empty shape");
    for (std::size_t e : shape_) {
      if (e == 0) {
        throw std::invalid_argument("Tensor: zero extent in " +
                                    shape_string(shape_));
      }
    }
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) off = off * shape_[axis++] + i;
    return off;
  }

  Shape shape_;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "dot");
  return dot(a.data(), b.data());
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }
inline double squared_norm(const Tensor& a) { return dot(a.data(), a.data()); }

inline bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Filter banks and 3x3 convolution
// ---------------------------------------------------------------------------

enum class BankRole {
  kGeneric,
  kAnalysisA,
  kAnalysisB,
  kSynthesisB,
  kSynthesisA,
  kResidualD,
  kPlusH1,
  kPlusH2,
  kPlusHt1,
  kPlusHt2,
  kResidualG,
};

inline constexpr std::size_t kKernelSize = 3;

/// Convolution weights of shape [n_out, n_in, 3, 3]; no bias.
struct FilterBank {
  Tensor weights;
  BankRole role = BankRole::kGeneric;

  FilterBank() = default;
  FilterBank(Tensor w, BankRole r) : weights(std::move(w)), role(r) {
    validate();
  }

  static FilterBank zeros(std::size_t n_out, std::size_t n_in,
                          BankRole role = BankRole::kGeneric) {
    return FilterBank(Tensor({n_out, n_in, kKernelSize, kKernelSize}), role);
  }

  /// Center tap `value` on every (o, i) pair where o == i (or, when one side
  /// has a single channel, on every pair), zeros elsewhere.
  static FilterBank identity(std::size_t n_out, std::size_t n_in,
                             BankRole role = BankRole::kGeneric,
                             double value = 1.0) {
    FilterBank bank = zeros(n_out, n_in, role);
    for (std::size_t o = 0; o < n_out; ++o) {
      for (std::size_t i = 0; i < n_in; ++i) {
        if (o == i || n_out == 1 || n_in == 1) bank.weights(o, i, 1, 1) = value;
      }
    }
    return bank;
  }

  std::size_t out_channels() const { return weights.extent(0); }
  std::size_t in_channels() const { return weights.extent(1); }

  void validate() const {
    if (weights.rank() != 4 || weights.extent(2) != kKernelSize ||
        weights.extent(3) != kKernelSize) {
      throw std::invalid_argument("FilterBank: expected [n_out,n_in,3,3], got " +
                                  shape_string(weights.shape()));
    }
  }

  friend bool operator==(const FilterBank&, const FilterBank&) = default;
};

namespace detail {

inline void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw std::invalid_argument(std::string(what) +
                                ": expected [C,H,W] tensor, got " +
                                shape_string(t.shape()));
  }
}

// Visits every (output row, input row, column span) overlap of a 3x3 tap at
// offset (ki-1, kj-1) under zero padding.
template <class F>
inline void for_each_tap_overlap(std::size_t height, std::size_t width,
                                 std::size_t ki, std::size_t kj, F&& f) {
  const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - 1;
  const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - 1;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
  const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -di);
  const std::ptrdiff_t i1 = std::min<std::ptrdiff_t>(h, h - di);
  const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -dj);
  const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(w, w - dj);
  if (j1 <= j0) return;
  for (std::ptrdiff_t i = i0; i < i1; ++i) {
    f(static_cast<std::size_t>(i), static_cast<std::size_t>(i + di),
      static_cast<std::size_t>(j0), static_cast<std::size_t>(j0 + dj),
      static_cast<std::size_t>(j1 - j0));
  }
}

}  // namespace detail

/// Stride-1, zero-padded, same-size 2-D cross-correlation without bias.
/// input [C_in,H,W] -> output [C_out,H,W].
inline Tensor conv2d(const Tensor& input, const FilterBank& bank) {
  detail::require_image(input, "conv2d");
  const std::size_t c_in = input.extent(0);
  const std::size_t h = input.extent(1);
  const std::size_t w = input.extent(2);
  if (c_in != bank.in_channels()) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(c_in) +
                                " channels, bank expects " +
                                std::to_string(bank.in_channels()));
  }
  const std::size_t c_out = bank.out_channels();
  Tensor out({c_out, h, w});
  const double* in = input.raw();
  const double* wt = bank.weights.raw();
  double* dst = out.raw();
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t ki = 0; ki < kKernelSize; ++ki) {
        for (std::size_t kj = 0; kj < kKernelSize; ++kj) {
          const double tap = wt[((o * c_in + c) * 3 + ki) * 3 + kj];
          detail::for_each_tap_overlap(
              h, w, ki, kj,
              [&](std::size_t oi, std::size_t ii, std::size_t oj,
                  std::size_t ij, std::size_t len) {
                double* orow = dst + (o * h + oi) * w + oj;
                const double* irow = in + (c * h + ii) * w + ij;
                for (std::size_t j = 0; j < len; ++j) orow[j] += tap * irow[j];
              });
        }
      }
    }
  }
  return out;
}

/// Exact adjoint of conv2d for a fixed bank: [C_out,H,W] -> [C_in,H,W].
inline Tensor conv2d_transpose(const Tensor& grad_out, const FilterBank& bank) {
  detail::require_image(grad_out, "conv2d_transpose");
  const std::size_t c_out = grad_out.extent(0);
  const std::size_t h = grad_out.extent(1);
  const std::size_t w = grad_out.extent(2);
  if (c_out != bank.out_channels()) {
    throw std::invalid_argument("conv2d_transpose: gradient has " +
                                std::to_string(c_out) +
                                " channels, bank produces " +
                                std::to_string(bank.out_channels()));
  }
  const std::size_t c_in = bank.in_channels();
  Tensor out({c_in, h, w});
  const double* g = grad_out.raw();
  const double* wt = bank.weights.raw();
  double* dst = out.raw();
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t ki = 0; ki < kKernelSize; ++ki) {
        for (std::size_t kj = 0; kj < kKernelSize; ++kj) {
          const double tap = wt[((o * c_in + c) * 3 + ki) * 3 + kj];
          detail::for_each_tap_overlap(
              h, w, ki, kj,
              [&](std::size_t oi, std::size_t ii, std::size_t oj,
                  std::size_t ij, std::size_t len) {
                const double* grow = g + (o * h + oi) * w + oj;
                double* irow = dst + (c * h + ii) * w + ij;
                for (std::size_t j = 0; j < len; ++j) irow[j] += tap * grow[j];
              });
        }
      }
    }
  }
  return out;
}

/// Gradient of sum(conv2d(input, W) * grad_out) with respect to W.
/// Returns a [C_out,C_in,3,3] tensor.
inline Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out) {
  detail::require_image(input, "conv2d_weight_grad");
  detail::require_image(grad_out, "conv2d_weight_grad");
  if (input.extent(1) != grad_out.extent(1) ||
      input.extent(2) != grad_out.extent(2)) {
    throw std::invalid_argument("conv2d_weight_grad: spatial mismatch " +
                                shape_string(input.shape()) + " vs " +
                                shape_string(grad_out.shape()));
  }
  const std::size_t c_in = input.extent(0);
  const std::size_t c_out = grad_out.extent(0);
  const std::size_t h = input.extent(1);
  const std::size_t w = input.extent(2);
  Tensor out({c_out, c_in, kKernelSize, kKernelSize});
  const double* in = input.raw();
  const double* g = grad_out.raw();
  double* dst = out.raw();
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t ki = 0; ki < kKernelSize; ++ki) {
        for (std::size_t kj = 0; kj < kKernelSize; ++kj) {
          double acc = 0.0;
          detail::for_each_tap_overlap(
              h, w, ki, kj,
              [&](std::size_t oi, std::size_t ii, std::size_t oj,
                  std::size_t ij, std::size_t len) {
                const double* grow = g + (o * h + oi) * w + oj;
                const double* irow = in + (c * h + ii) * w + ij;
                for (std::size_t j = 0; j < len; ++j) acc += grow[j] * irow[j];
              });
          dst[((o * c_in + c) * 3 + ki) * 3 + kj] = acc;
        }
      }
    }
  }
  return out;
}

inline Tensor relu(Tensor x) {
  for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
  return x;
}

/// 1 where x > 0, else 0 (including x == 0).
inline Tensor relu_grad_mask(const Tensor& x) {
  Tensor mask = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
  return mask;
}

/// grad * relu'(pre_activation).
inline Tensor relu_backward(const Tensor& pre_activation, Tensor grad) {
  pre_activation.require_same_shape(grad, "relu_backward");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(pre_activation[i] > 0.0)) grad[i] = 0.0;
  }
  return grad;
}

}  // namespace proxavg
