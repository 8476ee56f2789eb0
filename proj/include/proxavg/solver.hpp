#pragma once

// Fixed-parameter proximal-averaged iterative shrinkage: the plain form
// x <- F~(sum_i alpha_i P_i(F(r))) and the residual form
// x <- r + G(H~(sum_i alpha_i P_i(H(D(r))))), where each iteration first takes
// the gradient step r = x - rho Phi^T (Phi x - y).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "proxavg/penalties.hpp"
#include "proxavg/sensing.hpp"
#include "proxavg/tensor.hpp"
#include "proxavg/transforms.hpp"

namespace proxavg {

struct SolverConfig {
  int iterations = 1;
  double rho = 1.0;
  std::vector<PenaltySpec> penalties;
  MixtureWeights alphas;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("solver: iterations must be >= 1");
    if (!(rho > 0.0)) throw std::invalid_argument("solver: rho must be > 0");
    if (penalties.empty()) throw std::invalid_argument("solver: no penalties");
    if (penalties.size() != alphas.size()) {
      throw std::invalid_argument("solver: penalty/weight count mismatch");
    }
  }
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;      // 1/2 ||Phi x - y||^2 + sum_i alpha_i g_i(F(x))
  double residual_norm = 0.0;  // ||Phi x - y||_2
};

struct SolveResult {
  Tensor x;
  std::vector<IterationRecord> trace;
};

inline double data_residual_norm(const SensingOperator& op, const Tensor& x, const Tensor& y) {
  Tensor res = op.measure(x);
  res -= y.reshaped(res.shape());
  return std::sqrt(squared_norm(res));
}

/// sum_e sum_i alpha_i g_i(coeffs_e)
inline double composite_penalty(const std::vector<PenaltySpec>& penalties,
                                const MixtureWeights& alphas, const Tensor& coeffs) {
  double total = 0.0;
  for (std::size_t i = 0; i < penalties.size(); ++i) {
    double s = 0.0;
    for (double c : coeffs.data()) s += penalty_value(penalties[i], c);
    total += alphas[i] * s;
  }
  return total;
}

/// Phi^T y reshaped to [1,H,W].
inline Tensor initial_estimate(const SensingOperator& op, const Tensor& y,
                               std::size_t height, std::size_t width) {
  if (height * width != op.n()) {
    throw std::invalid_argument("patch " + std::to_string(height) + "x" +
                                std::to_string(width) + " does not match sensing n=" +
                                std::to_string(op.n()));
  }
  return op.adjoint(y).reshaped({1, height, width});
}

inline Tensor paisa_update(const SolverConfig& cfg, const AnalysisTransform& analysis,
                           const SynthesisTransform& synthesis, const Tensor& r) {
  return forward_Ftilde(synthesis,
                        prox_average(cfg.penalties, cfg.alphas, forward_F(analysis, r)));
}

inline Tensor paisa_plus_update(const SolverConfig& cfg, const PlusTransform& plus,
                                const Tensor& r) {
  return forward_plus(plus, r, [&](const Tensor& u) {
    return prox_average(cfg.penalties, cfg.alphas, u);
  });
}

namespace detail {

inline void check_measurements(const SensingOperator& op, const Tensor& y) {
  if (y.size() != op.m()) {
    throw std::invalid_argument("solver: expected " + std::to_string(op.m()) +
                                " measurements, got " + std::to_string(y.size()));
  }
}

}  // namespace detail

inline SolveResult run_paisa(const SolverConfig& cfg, const AnalysisTransform& analysis,
                             const SynthesisTransform& synthesis, const SensingOperator& op,
                             const Tensor& y, std::size_t height, std::size_t width) {
  cfg.validate();
  detail::check_measurements(op, y);
  SolveResult out{initial_estimate(op, y, height, width), {}};
  out.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int k = 0; k < cfg.iterations; ++k) {
    const Tensor r = gradient_step(op, out.x, y, cfg.rho);
    out.x = paisa_update(cfg, analysis, synthesis, r);
    const double res = data_residual_norm(op, out.x, y);
    const double pen =
        composite_penalty(cfg.penalties, cfg.alphas, forward_F(analysis, out.x));
    out.trace.push_back({k + 1, 0.5 * res * res + pen, res});
  }
  return out;
}

inline SolveResult run_paisa_plus(const SolverConfig& cfg, const PlusTransform& plus,
                                  const SensingOperator& op, const Tensor& y,
                                  std::size_t height, std::size_t width) {
  cfg.validate();
  detail::check_measurements(op, y);
  SolveResult out{initial_estimate(op, y, height, width), {}};
  out.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int k = 0; k < cfg.iterations; ++k) {
    const Tensor r = gradient_step(op, out.x, y, cfg.rho);
    out.x = paisa_plus_update(cfg, plus, r);
    const double res = data_residual_norm(op, out.x, y);
    const Tensor coeffs = conv_relu_conv(plus.H1, plus.H2, conv2d(out.x, plus.D));
    const double pen = composite_penalty(cfg.penalties, cfg.alphas, coeffs);
    out.trace.push_back({k + 1, 0.5 * res * res + pen, res});
  }
  return out;
}

}  // namespace proxavg
