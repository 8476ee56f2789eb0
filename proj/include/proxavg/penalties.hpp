#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "proxavg/tensor.hpp"

namespace proxavg {

enum class PenaltyKind { kL1, kMCP, kSCAD };

/// Constraint margin: lambda >= eps, gamma >= 1 + eps, a >= 2 + eps.
inline constexpr double kParamMargin = 1e-6;

inline std::string_view penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kL1: return "l1";
    case PenaltyKind::kMCP: return "mcp";
    case PenaltyKind::kSCAD: return "scad";
  }
  return "?";
}

inline PenaltyKind parse_penalty(std::string_view s) {
  if (s == "l1") return PenaltyKind::kL1;
  if (s == "mcp") return PenaltyKind::kMCP;
  if (s == "scad") return PenaltyKind::kSCAD;
  throw std::invalid_argument("unknown penalty '" + std::string(s) +
                              "' (expected l1, mcp or scad)");
}

/// Lower bound of the shape parameter: gamma for MCP, a for SCAD.
inline double shape_lower_bound(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kMCP: return 1.0 + kParamMargin;
    case PenaltyKind::kSCAD: return 2.0 + kParamMargin;
    default: return 0.0;
  }
}

/// One sparsity penalty and its parameters. The shape parameter is gamma for
/// MCP, a for SCAD and unused for L1.
class PenaltySpec {
 public:
  static PenaltySpec l1(double lambda) {
    return PenaltySpec(PenaltyKind::kL1, lambda, 0.0);
  }
  static PenaltySpec mcp(double lambda, double gamma) {
    return PenaltySpec(PenaltyKind::kMCP, lambda, gamma);
  }
  static PenaltySpec scad(double lambda, double a) {
    return PenaltySpec(PenaltyKind::kSCAD, lambda, a);
  }
  static PenaltySpec make(PenaltyKind kind, double lambda, double shape) {
    return PenaltySpec(kind, lambda, shape);
  }

  PenaltyKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double gamma() const { return shape_; }
  double a() const { return shape_; }
  double shape() const { return shape_; }

 private:
  PenaltySpec(PenaltyKind kind, double lambda, double shape)
      : kind_(kind), lambda_(lambda), shape_(shape) {
    if (!(lambda >= kParamMargin) || !std::isfinite(lambda)) {
      throw std::invalid_argument(std::string(penalty_name(kind)) +
                                  ": lambda must be > 0, got " +
                                  std::to_string(lambda));
    }
    if (kind == PenaltyKind::kMCP &&
        (!(shape >= shape_lower_bound(kind)) || !std::isfinite(shape))) {
      throw std::invalid_argument("mcp: gamma must be > 1, got " +
                                  std::to_string(shape));
    }
    if (kind == PenaltyKind::kSCAD &&
        (!(shape >= shape_lower_bound(kind)) || !std::isfinite(shape))) {
      throw std::invalid_argument("scad: a must be > 2, got " +
                                  std::to_string(shape));
    }
  }

  PenaltyKind kind_;
  double lambda_;
  double shape_;
};

inline double penalty_value(const PenaltySpec& spec, double x) {
  const double t = std::abs(x);
  const double lam = spec.lambda();
  switch (spec.kind()) {
    case PenaltyKind::kL1:
      return lam * t;
    case PenaltyKind::kMCP: {
      const double g = spec.gamma();
      // Continuous at gamma*lambda and consistent with the firm-threshold prox.
      if (t <= g * lam) return lam * t - t * t / (2.0 * g);
      return lam * lam * g / 2.0;
    }
    case PenaltyKind::kSCAD: {
      const double a = spec.a();
      if (t <= lam) return lam * t;
      if (t <= a * lam) return (t * t - 2.0 * a * lam * t + lam * lam) / (2.0 * (1.0 - a));
      return (a + 1.0) * lam * lam / 2.0;
    }
  }
  return 0.0;
}

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Closed-form proximal operator argmin_u 1/2 (u - x)^2 + g(u).
inline double prox(const PenaltySpec& spec, double x) {
  const double t = std::abs(x);
  const double s = sign_of(x);
  const double lam = spec.lambda();
  switch (spec.kind()) {
    case PenaltyKind::kL1:
      return s * std::max(t - lam, 0.0);
    case PenaltyKind::kMCP: {
      const double g = spec.gamma();
      if (t <= lam) return 0.0;
      if (t <= g * lam) return s * g / (g - 1.0) * (t - lam);
      return x;
    }
    case PenaltyKind::kSCAD: {
      const double a = spec.a();
      if (t <= 2.0 * lam) return s * std::max(t - lam, 0.0);
      if (t <= a * lam) return ((a - 1.0) * x - s * a * lam) / (a - 2.0);
      return x;
    }
  }
  return x;
}

/// d prox / dx, taking the right-hand derivative at breakpoints.
inline double prox_grad(const PenaltySpec& spec, double x) {
  const double t = std::abs(x);
  // Moving right from x grows |x| iff x >= 0, so a breakpoint b counts as
  // "passed" when t >= b on that side and t > b on the other.
  const bool outward = x >= 0.0;
  auto beyond = [&](double b) { return outward ? t >= b : t > b; };
  const double lam = spec.lambda();
  switch (spec.kind()) {
    case PenaltyKind::kL1:
      return beyond(lam) ? 1.0 : 0.0;
    case PenaltyKind::kMCP: {
      const double g = spec.gamma();
      if (beyond(g * lam)) return 1.0;
      if (beyond(lam)) return g / (g - 1.0);
      return 0.0;
    }
    case PenaltyKind::kSCAD: {
      const double a = spec.a();
      if (beyond(a * lam)) return 1.0;
      if (beyond(2.0 * lam)) return (a - 1.0) / (a - 2.0);
      if (beyond(lam)) return 1.0;
      return 0.0;
    }
  }
  return 1.0;
}

/// Partial derivatives of prox(spec, x) with respect to lambda and the shape
/// parameter (gamma or a). Branches follow the partition used by prox().
struct ProxParamGrad {
  double d_lambda = 0.0;
  double d_shape = 0.0;
};

inline ProxParamGrad prox_param_grad(const PenaltySpec& spec, double x) {
  const double t = std::abs(x);
  const double s = sign_of(x);
  const double lam = spec.lambda();
  switch (spec.kind()) {
    case PenaltyKind::kL1:
      return t > lam ? ProxParamGrad{-s, 0.0} : ProxParamGrad{};
    case PenaltyKind::kMCP: {
      const double g = spec.gamma();
      if (t <= lam || t > g * lam) return {};
      const double gm1 = g - 1.0;
      return {-s * g / gm1, -s * (t - lam) / (gm1 * gm1)};
    }
    case PenaltyKind::kSCAD: {
      const double a = spec.a();
      if (t <= lam || t > a * lam) return {};
      if (t <= 2.0 * lam) return {-s, 0.0};
      const double am2 = a - 2.0;
      return {-s * a / am2, (2.0 * s * lam - x) / (am2 * am2)};
    }
  }
  return {};
}

inline Tensor prox_elementwise(const PenaltySpec& spec, Tensor x) {
  for (double& v : x.data()) v = prox(spec, v);
  return x;
}

/// Convex combination weights alpha_1..alpha_p.
class MixtureWeights {
 public:
  MixtureWeights() = default;

  /// Requires sum == 1 (to 1e-12) and each weight in (0, 1); a single
  /// regularizer carries weight exactly 1.
  explicit MixtureWeights(std::vector<double> alphas) : alphas_(std::move(alphas)) {
    if (alphas_.empty()) throw std::invalid_argument("MixtureWeights: empty");
    double sum = 0.0;
    for (double a : alphas_) sum += a;
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument("MixtureWeights: weights must sum to 1, got " +
                                  std::to_string(sum));
    }
    if (alphas_.size() > 1) {
      for (double a : alphas_) {
        if (!(a > 0.0 && a < 1.0)) {
          throw std::invalid_argument("MixtureWeights: each weight must lie in (0,1)");
        }
      }
    }
  }

  static MixtureWeights uniform(std::size_t p) {
    return MixtureWeights(std::vector<double>(p, 1.0 / static_cast<double>(p)));
  }

  /// Skips validation; lets tests exercise exact 0/1 weights.
  static MixtureWeights unchecked(std::vector<double> alphas) {
    MixtureWeights w;
    w.alphas_ = std::move(alphas);
    return w;
  }

  std::size_t size() const { return alphas_.size(); }
  double operator[](std::size_t i) const { return alphas_[i]; }
  const std::vector<double>& values() const { return alphas_; }

 private:
  std::vector<double> alphas_;
};

/// sum_i alpha_i prox_i(x), elementwise.
inline Tensor prox_average(const std::vector<PenaltySpec>& specs,
                           const MixtureWeights& weights, const Tensor& x) {
  if (specs.size() != weights.size()) {
    throw std::invalid_argument("prox_average: " + std::to_string(specs.size()) +
                                " penalties but " + std::to_string(weights.size()) +
                                " weights");
  }
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t e = 0; e < x.size(); ++e) {
    double acc = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i) acc += weights[i] * prox(specs[i], x[e]);
    out[e] = acc;
  }
  return out;
}

struct ProxAverageGrad {
  Tensor input;
  std::vector<ProxParamGrad> params;  // one per penalty
};

/// Vector-Jacobian product of prox_average at x with upstream gradient g.
inline ProxAverageGrad prox_average_backward(const std::vector<PenaltySpec>& specs,
                                             const MixtureWeights& weights,
                                             const Tensor& x, const Tensor& g) {
  x.require_same_shape(g, "prox_average_backward");
  ProxAverageGrad out{Tensor::zeros_like(x), std::vector<ProxParamGrad>(specs.size())};
  for (std::size_t e = 0; e < x.size(); ++e) {
    double dx = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      dx += weights[i] * prox_grad(specs[i], x[e]);
      const ProxParamGrad pg = prox_param_grad(specs[i], x[e]);
      out.params[i].d_lambda += g[e] * weights[i] * pg.d_lambda;
      out.params[i].d_shape += g[e] * weights[i] * pg.d_shape;
    }
    out.input[e] = g[e] * dx;
  }
  return out;
}

}  // namespace proxavg
