#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string_view>

#include "proxavg/penalties.hpp"
#include "proxavg/tensor.hpp"

namespace proxavg {

// ---------------------------------------------------------------------------
// conv -> relu -> conv, the building block of F, F~, H and H~.
// ---------------------------------------------------------------------------

struct ConvPairTape {
  Tensor input;
  Tensor pre_activation;
  Tensor hidden;  // relu(pre_activation)
  const void* owner = nullptr;
  bool filled = false;
};

struct ConvPairGrad {
  Tensor input;
  Tensor first;
  Tensor second;
};

inline Tensor conv_relu_conv(const FilterBank& first, const FilterBank& second,
                             const Tensor& x, ConvPairTape* tape = nullptr,
                             const void* owner = nullptr) {
  Tensor pre = conv2d(x, first);
  Tensor hidden = relu(pre);
  Tensor out = conv2d(hidden, second);
  if (tape) {
    tape->input = x;
    tape->pre_activation = std::move(pre);
    tape->hidden = std::move(hidden);
    tape->owner = owner;
    tape->filled = true;
  }
  return out;
}

inline void check_tape(bool filled, const void* recorded, const void* expected) {
  if (!filled) throw std::logic_error("backward called without a recorded forward tape");
  if (recorded != expected) {
    throw std::logic_error("backward called with a tape recorded for different weights");
  }
}

inline ConvPairGrad conv_relu_conv_backward(const FilterBank& first,
                                            const FilterBank& second,
                                            const ConvPairTape& tape,
                                            const Tensor& grad_out) {
  ConvPairGrad g;
  g.second = conv2d_weight_grad(tape.hidden, grad_out);
  Tensor grad_hidden = conv2d_transpose(grad_out, second);
  Tensor grad_pre = relu_backward(tape.pre_activation, std::move(grad_hidden));
  g.first = conv2d_weight_grad(tape.input, grad_pre);
  g.input = conv2d_transpose(grad_pre, first);
  return g;
}

// ---------------------------------------------------------------------------
// Transform weight sets
// ---------------------------------------------------------------------------

/// He-style init: zero-mean Gaussian with std sqrt(2 / (9 n_in)).
template <class Rng>
FilterBank random_bank(std::size_t n_out, std::size_t n_in, BankRole role, Rng& rng) {
  FilterBank bank = FilterBank::zeros(n_out, n_in, role);
  std::normal_distribution<double> normal(
      0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(n_in))));
  for (double& v : bank.weights.data()) v = normal(rng);
  return bank;
}

/// F(x) = B relu(A x). A: [n_f,1,3,3], B: [n_f,n_f,3,3].
struct AnalysisTransform {
  FilterBank A;
  FilterBank B;

  static AnalysisTransform identity(std::size_t n_f) {
    return {FilterBank::identity(n_f, 1, BankRole::kAnalysisA),
            FilterBank::identity(n_f, n_f, BankRole::kAnalysisB)};
  }
  template <class Rng>
  static AnalysisTransform random(std::size_t n_f, Rng& rng) {
    AnalysisTransform t;
    t.A = random_bank(n_f, 1, BankRole::kAnalysisA, rng);
    t.B = random_bank(n_f, n_f, BankRole::kAnalysisB, rng);
    return t;
  }
  std::size_t filters() const { return A.out_channels(); }

  friend bool operator==(const AnalysisTransform&, const AnalysisTransform&) = default;
};

/// F~(z) = At relu(Bt z). Bt: [n_f,n_f,3,3], At: [1,n_f,3,3]. Learned
/// independently of F.
struct SynthesisTransform {
  FilterBank Bt;
  FilterBank At;

  /// Identity Bt and an averaging At, so F~(F(x)) = x for x >= 0 when F is
  /// also the identity transform.
  static SynthesisTransform identity(std::size_t n_f) {
    return {FilterBank::identity(n_f, n_f, BankRole::kSynthesisB),
            FilterBank::identity(1, n_f, BankRole::kSynthesisA,
                                 1.0 / static_cast<double>(n_f))};
  }
  template <class Rng>
  static SynthesisTransform random(std::size_t n_f, Rng& rng) {
    SynthesisTransform t;
    t.Bt = random_bank(n_f, n_f, BankRole::kSynthesisB, rng);
    t.At = random_bank(1, n_f, BankRole::kSynthesisA, rng);
    return t;
  }

  friend bool operator==(const SynthesisTransform&, const SynthesisTransform&) = default;
};

/// Residual-form transform: F = H o D, residual extraction G o D.
/// H = H2 relu H1, H~ = Ht2 relu Ht1.
struct PlusTransform {
  FilterBank D;    // [n_f,1,3,3]
  FilterBank H1;   // [n_f,n_f,3,3]
  FilterBank H2;
  FilterBank Ht1;
  FilterBank Ht2;
  FilterBank G;    // [1,n_f,3,3]

  static PlusTransform identity(std::size_t n_f) {
    return {FilterBank::identity(n_f, 1, BankRole::kResidualD),
            FilterBank::identity(n_f, n_f, BankRole::kPlusH1),
            FilterBank::identity(n_f, n_f, BankRole::kPlusH2),
            FilterBank::identity(n_f, n_f, BankRole::kPlusHt1),
            FilterBank::identity(n_f, n_f, BankRole::kPlusHt2),
            FilterBank::identity(1, n_f, BankRole::kResidualG,
                                 1.0 / static_cast<double>(n_f))};
  }
  template <class Rng>
  static PlusTransform random(std::size_t n_f, Rng& rng) {
    PlusTransform t;
    t.D = random_bank(n_f, 1, BankRole::kResidualD, rng);
    t.H1 = random_bank(n_f, n_f, BankRole::kPlusH1, rng);
    t.H2 = random_bank(n_f, n_f, BankRole::kPlusH2, rng);
    t.Ht1 = random_bank(n_f, n_f, BankRole::kPlusHt1, rng);
    t.Ht2 = random_bank(n_f, n_f, BankRole::kPlusHt2, rng);
    t.G = random_bank(1, n_f, BankRole::kResidualG, rng);
    return t;
  }
  std::size_t filters() const { return D.out_channels(); }

  friend bool operator==(const PlusTransform&, const PlusTransform&) = default;
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

inline Tensor forward_F(const AnalysisTransform& t, const Tensor& x,
                        ConvPairTape* tape = nullptr) {
  return conv_relu_conv(t.A, t.B, x, tape, &t);
}

inline Tensor forward_Ftilde(const SynthesisTransform& t, const Tensor& z,
                             ConvPairTape* tape = nullptr) {
  return conv_relu_conv(t.Bt, t.At, z, tape, &t);
}

struct AnalysisGrad {
  Tensor input;
  Tensor A;
  Tensor B;
};

struct SynthesisGrad {
  Tensor input;
  Tensor Bt;
  Tensor At;
};

inline AnalysisGrad backward_F(const AnalysisTransform& t, const ConvPairTape& tape,
                               const Tensor& grad_out) {
  check_tape(tape.filled, tape.owner, &t);
  ConvPairGrad g = conv_relu_conv_backward(t.A, t.B, tape, grad_out);
  return {std::move(g.input), std::move(g.first), std::move(g.second)};
}

inline SynthesisGrad backward_Ftilde(const SynthesisTransform& t, const ConvPairTape& tape,
                                     const Tensor& grad_out) {
  check_tape(tape.filled, tape.owner, &t);
  ConvPairGrad g = conv_relu_conv_backward(t.Bt, t.At, tape, grad_out);
  return {std::move(g.input), std::move(g.first), std::move(g.second)};
}

struct PlusTape {
  Tensor r;         // layer input
  Tensor d;         // D(r)
  ConvPairTape h;   // H applied to d
  Tensor u;         // H(D(r)), input of the shrinkage
  ConvPairTape ht;  // H~ applied to the shrinkage output
  Tensor v;         // H~(...), input of G
  const void* owner = nullptr;
  bool filled = false;
};

struct PlusGrad {
  Tensor input;
  Tensor D, H1, H2, Ht1, Ht2, G;
};

/// r + G(H~(shrink(H(D(r))))). `shrink` maps a tensor to a same-shaped tensor.
template <class Shrink>
Tensor forward_plus(const PlusTransform& t, const Tensor& r, Shrink&& shrink,
                    PlusTape* tape = nullptr) {
  Tensor d = conv2d(r, t.D);
  ConvPairTape h_tape;
  ConvPairTape ht_tape;
  Tensor u = conv_relu_conv(t.H1, t.H2, d, tape ? &h_tape : nullptr, &t);
  Tensor z = shrink(u);
  Tensor v = conv_relu_conv(t.Ht1, t.Ht2, z, tape ? &ht_tape : nullptr, &t);
  Tensor out = r + conv2d(v, t.G);
  if (tape) {
    tape->r = r;
    tape->d = std::move(d);
    tape->h = std::move(h_tape);
    tape->u = std::move(u);
    tape->ht = std::move(ht_tape);
    tape->v = std::move(v);
    tape->owner = &t;
    tape->filled = true;
  }
  return out;
}

/// Reverse pass of forward_plus. `shrink_vjp(u, grad_z)` must return the
/// gradient with respect to the shrinkage input u.
template <class ShrinkVjp>
PlusGrad backward_plus(const PlusTransform& t, const PlusTape& tape,
                       const Tensor& grad_out, ShrinkVjp&& shrink_vjp) {
  check_tape(tape.filled, tape.owner, &t);
  PlusGrad g;
  g.G = conv2d_weight_grad(tape.v, grad_out);
  Tensor grad_v = conv2d_transpose(grad_out, t.G);
  ConvPairGrad ht = conv_relu_conv_backward(t.Ht1, t.Ht2, tape.ht, grad_v);
  g.Ht1 = std::move(ht.first);
  g.Ht2 = std::move(ht.second);
  Tensor grad_u = shrink_vjp(tape.u, ht.input);
  ConvPairGrad h = conv_relu_conv_backward(t.H1, t.H2, tape.h, grad_u);
  g.H1 = std::move(h.first);
  g.H2 = std::move(h.second);
  g.D = conv2d_weight_grad(tape.r, h.input);
  g.input = grad_out + conv2d_transpose(h.input, t.D);
  return g;
}

}  // namespace proxavg
