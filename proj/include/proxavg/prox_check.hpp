#pragma once

// Brute-force check of the closed-form proximal operators: the minimizer of
// 1/2 (u - x)^2 + g(u) is located on a uniform grid and compared with prox().

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "proxavg/penalties.hpp"

namespace proxavg {

/// argmin over u in {lo, lo + step, ..., hi} of 1/2 (u - x)^2 + g(u).
inline double grid_prox(const PenaltySpec& spec, double x, double lo = -12.0, double hi = 12.0,
                        double step = 1e-4) {
  const auto count = static_cast<long long>(std::floor((hi - lo) / step + 0.5));
  double best_u = lo;
  double best = INFINITY;
  for (long long k = 0; k <= count; ++k) {
    const double u = lo + static_cast<double>(k) * step;
    const double f = 0.5 * (u - x) * (u - x) + penalty_value(spec, u);
    if (f < best) {
      best = f;
      best_u = u;
    }
  }
  return best_u;
}

struct ProxCheckDraw {
  PenaltySpec spec;
  double x;
  double closed_form;
  double grid;
};

struct ProxCheckReport {
  std::vector<ProxCheckDraw> draws;
  double max_deviation = 0.0;
};

/// Random (penalty, parameter, input) draws: lambda in [0.1,2], gamma in
/// [1.2,5], a in [2.2,6], |x| <= 10.
inline ProxCheckReport run_prox_check(std::size_t draws, std::uint64_t seed, double step = 1e-4) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> lam(0.1, 2.0), gam(1.2, 5.0), a(2.2, 6.0), x(-10.0, 10.0);
  ProxCheckReport rep;
  rep.draws.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    const int k = kind(rng);
    const double l = lam(rng);
    const PenaltySpec spec = k == 0   ? PenaltySpec::l1(l)
                             : k == 1 ? PenaltySpec::mcp(l, gam(rng))
                                      : PenaltySpec::scad(l, a(rng));
    const double xv = x(rng);
    const double cf = prox(spec, xv);
    const double g = grid_prox(spec, xv, -12.0, 12.0, step);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(cf - g));
    rep.draws.push_back({spec, xv, cf, g});
  }
  return rep;
}

}  // namespace proxavg
