#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace proxavg {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("adam: learning rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("adam: betas must lie in (0,1)");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be > 0");
  }
};

/// Adam with bias correction over an ordered list of parameter groups.
/// Groups are identified by their position in each step; the first step
/// fixes the layout.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  /// Starts a new step; call update() for each group in order afterwards.
  void begin_step() {
    ++t_;
    cursor_ = 0;
    bias1_ = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    bias2_ = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  }

  void update(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: param/grad size mismatch");
    if (t_ == 0) throw std::logic_error("adam: update() before begin_step()");
    if (cursor_ == moments_.size()) {
      if (t_ != 1) throw std::logic_error("adam: parameter layout changed between steps");
      moments_.push_back({std::vector<double>(params.size(), 0.0),
                          std::vector<double>(params.size(), 0.0)});
    }
    Moments& mo = moments_[cursor_++];
    if (mo.m.size() != params.size()) throw std::logic_error("adam: group size changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = mo.m[i] / bias1_;
      const double v_hat = mo.v[i] / bias2_;
      params[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }

  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  const std::vector<Moments>& moments() const { return moments_; }

 private:
  AdamConfig cfg_;
  std::vector<Moments> moments_;
  std::size_t cursor_ = 0;
  long t_ = 0;
  double bias1_ = 1.0;
  double bias2_ = 1.0;
};

}  // namespace proxavg
