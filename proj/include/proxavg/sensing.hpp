#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "proxavg/tensor.hpp"
#include "proxavg/tensor_io.hpp"

namespace proxavg {

/// Measurement matrix Phi [m,n] with orthonormal rows.
class SensingOperator {
 public:
  SensingOperator() = default;
  SensingOperator(Tensor matrix, double cs_ratio, std::uint64_t seed)
      : matrix_(std::move(matrix)), cs_ratio_(cs_ratio), seed_(seed) {
    if (matrix_.rank() != 2) {
      throw std::invalid_argument("SensingOperator: matrix must be rank 2");
    }
    if (m() > n()) throw std::invalid_argument("SensingOperator: m > n");
  }

  std::size_t m() const { return matrix_.extent(0); }
  std::size_t n() const { return matrix_.extent(1); }
  double cs_ratio() const { return cs_ratio_; }
  std::uint64_t seed() const { return seed_; }
  const Tensor& matrix() const { return matrix_; }

  /// y = Phi x. x may have any shape with n elements (row-major flattening).
  Tensor measure(const Tensor& x) const {
    require_length(x, n(), "measure");
    Tensor y({m()});
    const double* a = matrix_.raw();
    for (std::size_t i = 0; i < m(); ++i) {
      double acc = 0.0;
      const double* row = a + i * n();
      for (std::size_t j = 0; j < n(); ++j) acc += row[j] * x[j];
      y[i] = acc;
    }
    return y;
  }

  /// Phi^T y, shaped [n].
  Tensor adjoint(const Tensor& y) const {
    require_length(y, m(), "adjoint");
    Tensor x({n()});
    const double* a = matrix_.raw();
    for (std::size_t i = 0; i < m(); ++i) {
      const double yi = y[i];
      const double* row = a + i * n();
      for (std::size_t j = 0; j < n(); ++j) x[j] += row[j] * yi;
    }
    return x;
  }

  /// Largest |(Phi Phi^T - I)_ij|.
  double orthonormality_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < m(); ++i) {
      for (std::size_t k = 0; k < m(); ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n(); ++j) acc += matrix_(i, j) * matrix_(k, j);
        worst = std::max(worst, std::abs(acc - (i == k ? 1.0 : 0.0)));
      }
    }
    return worst;
  }

 private:
  static void require_length(const Tensor& t, std::size_t len, const char* what) {
    if (t.size() != len) {
      throw std::invalid_argument(std::string("SensingOperator::") + what +
                                  ": expected " + std::to_string(len) +
                                  " values, got " + std::to_string(t.size()));
    }
  }

  Tensor matrix_;
  double cs_ratio_ = 1.0;
  std::uint64_t seed_ = 0;
};

inline std::size_t measurement_count(std::size_t n, double cs_ratio) {
  if (!(cs_ratio > 0.0 && cs_ratio <= 1.0)) {
    throw std::invalid_argument("cs_ratio must lie in (0,1], got " +
                                std::to_string(cs_ratio));
  }
  const auto m = static_cast<std::size_t>(std::llround(cs_ratio * static_cast<double>(n)));
  if (m < 1) throw std::invalid_argument("cs_ratio too small: no measurements");
  return std::min(m, n);
}

/// Seeded Gaussian matrix with rows orthonormalized by modified Gram-Schmidt
/// (two passes).
inline SensingOperator make_sensing(std::size_t n, double cs_ratio, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("make_sensing: n must be positive");
  const std::size_t m = measurement_count(n, cs_ratio);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor a({m, n});
  for (double& v : a.data()) v = normal(rng);

  double* d = a.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = d + i * n;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < i; ++k) {
        const double* prev = d + k * n;
        double proj = 0.0;
        for (std::size_t j = 0; j < n; ++j) proj += row[j] * prev[j];
        for (std::size_t j = 0; j < n; ++j) row[j] -= proj * prev[j];
      }
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("make_sensing: degenerate Gaussian draw");
    for (std::size_t j = 0; j < n; ++j) row[j] /= norm;
  }
  return SensingOperator(std::move(a), cs_ratio, seed);
}

/// r = x - rho * Phi^T (Phi x - y), returned in x's shape.
inline Tensor gradient_step(const SensingOperator& op, const Tensor& x,
                            const Tensor& y, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("gradient_step: rho must be > 0");
  Tensor residual = op.measure(x);
  residual -= y.reshaped(residual.shape());
  const Tensor back = op.adjoint(residual);
  Tensor r = x;
  for (std::size_t j = 0; j < r.size(); ++j) r[j] -= rho * back[j];
  return r;
}

/// Writes <stem>.pavt and the <stem>.json sidecar {n, m, cs_ratio, seed}.
inline void save_sensing(const std::filesystem::path& stem, const SensingOperator& op) {
  std::filesystem::path tensor_path = stem;
  tensor_path += ".pavt";
  std::filesystem::path json_path = stem;
  json_path += ".json";
  save_tensors(tensor_path, {op.matrix()});
  nlohmann::json meta = {{"n", op.n()},
                         {"m", op.m()},
                         {"cs_ratio", op.cs_ratio()},
                         {"seed", op.seed()}};
  std::ofstream os(json_path);
  if (!os) throw std::runtime_error("cannot write " + json_path.string());
  os << meta.dump(2) << '\n';
}

inline SensingOperator load_sensing(const std::filesystem::path& stem) {
  std::filesystem::path tensor_path = stem;
  tensor_path += ".pavt";
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::ifstream is(json_path);
  if (!is) throw std::runtime_error("cannot open " + json_path.string());
  const nlohmann::json meta = nlohmann::json::parse(is);
  auto tensors = load_tensors(tensor_path);
  if (tensors.size() != 1) throw std::runtime_error("sensing file must hold one tensor");
  SensingOperator op(std::move(tensors.front()), meta.at("cs_ratio").get<double>(),
                     meta.at("seed").get<std::uint64_t>());
  if (op.n() != meta.at("n").get<std::size_t>() || op.m() != meta.at("m").get<std::size_t>()) {
    throw std::runtime_error("sensing sidecar does not match matrix shape");
  }
  return op;
}

}  // namespace proxavg
