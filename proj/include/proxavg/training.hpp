#pragma once

// Quantization-aware training. Each batch runs
//   W_Q <- Q(W) for all banks, forward through every layer with W_Q,
//   loss, gradients at W_Q, Adam step on the shadow weights W, projection.
// Without quantization Q is the identity and this is plain Adam.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "proxavg/adam.hpp"
#include "proxavg/metrics.hpp"
#include "proxavg/network.hpp"
#include "proxavg/sensing.hpp"

namespace proxavg {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::optional<int> bits;  // unset: full precision
  double gamma_loss = 0.01;
  std::size_t patch_size = 33;
  double validation_fraction = 0.1;
  unsigned workers = 1;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }

  void validate() const {
    if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (patch_size == 0) throw std::invalid_argument("train: patch_size must be positive");
    if (!(gamma_loss >= 0.0)) throw std::invalid_argument("train: gamma_loss must be >= 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw std::invalid_argument("train: validation_fraction must lie in [0,1)");
    }
    if (workers == 0) throw std::invalid_argument("train: workers must be positive");
    if (bits) check_bits(*bits);
    adam().validate();
  }
};

/// Reads the TrainConfig fields present in `j`; other keys are ignored so a
/// config file can also carry model settings. "bits" may be an integer,
/// null or "full".
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg = {}) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("epochs", cfg.epochs);
  get("batch_size", cfg.batch_size);
  get("learning_rate", cfg.learning_rate);
  get("beta1", cfg.beta1);
  get("beta2", cfg.beta2);
  get("epsilon", cfg.epsilon);
  get("seed", cfg.seed);
  get("gamma_loss", cfg.gamma_loss);
  get("patch_size", cfg.patch_size);
  get("validation_fraction", cfg.validation_fraction);
  get("workers", cfg.workers);
  if (j.contains("bits")) {
    const auto& b = j.at("bits");
    if (b.is_null() || (b.is_string() && b.get<std::string>() == "full")) {
      cfg.bits.reset();
    } else if (b.is_number_integer()) {
      cfg.bits = b.get<int>();
    } else {
      throw std::invalid_argument("train config: bits must be an integer, null or \"full\"");
    }
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"bits", c.bits ? nlohmann::json(*c.bits) : nlohmann::json("full")},
          {"gamma_loss", c.gamma_loss},
          {"patch_size", c.patch_size},
          {"validation_fraction", c.validation_fraction},
          {"workers", c.workers}};
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;       // mean over batches of the loss before each step
  double mse = 0.0;
  double transform = 0.0;
  double val_psnr = 0.0;   // NaN when there is no validation split
  std::optional<double> val_ssim;  // only for patches of at least 11x11
  double baseline_psnr = 0.0;      // Phi^T y on the validation split
  double seconds = 0.0;
};

/// One JSON line per epoch. Wall-clock time is left out so logs of identical
/// runs compare equal byte for byte.
inline std::string epoch_log_line(const EpochRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"epoch", r.epoch},
                      {"loss", num(r.loss)},
                      {"mse", num(r.mse)},
                      {"transform", num(r.transform)},
                      {"val_psnr", num(r.val_psnr)},
                      {"val_ssim", r.val_ssim ? num(*r.val_ssim) : nlohmann::json(nullptr)},
                      {"baseline_psnr", num(r.baseline_psnr)}};
  return j.dump();
}

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t train_patches = 0;
  std::size_t validation_patches = 0;
  std::size_t steps = 0;
  std::string checkpoint;  // filled in by callers that save one
};

enum class TrainEvent { kQuantize, kForward, kLoss, kUpdate };

/// Observers for instrumentation; both may be empty.
struct TrainHooks {
  std::function<void(TrainEvent, const NetworkModel&, std::size_t epoch, std::size_t batch)> on_event;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct ValidationScores {
  double psnr = std::nan("");
  std::optional<double> ssim;
  double baseline_psnr = std::nan("");
};

/// Mean PSNR/SSIM of the model and of the Phi^T y estimate over `patches`.
inline ValidationScores validate_model(const NetworkModel& model, const SensingOperator& op,
                                       const std::vector<Tensor>& patches, unsigned workers = 1) {
  ValidationScores s;
  if (patches.empty()) return s;
  const Evaluation ev = evaluate(model, op, patches, 0.0, false, workers);
  const auto [h, w] = detail::image_dims(patches.front());
  const bool with_ssim = h >= kSsimWindow && w >= kSsimWindow;
  double p = 0.0, q = 0.0, b = 0.0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    p += psnr(ev.x_hat[i], patches[i]);
    if (with_ssim) q += ssim(ev.x_hat[i], patches[i]);
    b += psnr(op.adjoint(op.measure(patches[i])).reshaped(patches[i].shape()), patches[i]);
  }
  const double n = static_cast<double>(patches.size());
  s.psnr = p / n;
  if (with_ssim) s.ssim = q / n;
  s.baseline_psnr = b / n;
  return s;
}

/// Splits patch indices into (train, validation) with a seeded shuffle.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t count, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(count)));
  if (n_val >= count) n_val = count - 1;
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return {std::move(train), std::move(val)};
}

inline TrainReport train(NetworkModel& model, const SensingOperator& op,
                         const std::vector<Tensor>& patches, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  if (patches.empty()) throw std::invalid_argument("train: empty dataset");
  if (model.bits() != cfg.bits) {
    throw std::invalid_argument("train: model and config disagree on the bit width");
  }
  const Shape want{1, cfg.patch_size, cfg.patch_size};
  if (cfg.patch_size * cfg.patch_size != op.n()) {
    throw std::invalid_argument("train: patch size " + std::to_string(cfg.patch_size) +
                                " does not match sensing dimension " + std::to_string(op.n()));
  }
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].shape() != want) {
      throw std::invalid_argument("train: patch " + std::to_string(i) + " has shape " +
                                  shape_string(patches[i].shape()) + ", expected " +
                                  shape_string(want));
    }
  }

  auto [train_idx, val_idx] = split_indices(patches.size(), cfg.validation_fraction, cfg.seed);
  std::vector<Tensor> val;
  val.reserve(val_idx.size());
  for (std::size_t i : val_idx) val.push_back(patches[i]);

  TrainReport report;
  report.train_patches = train_idx.size();
  report.validation_patches = val.size();
  Adam adam(cfg.adam());
  std::mt19937_64 rng(cfg.seed);
  auto notify = [&](TrainEvent e, std::size_t epoch, std::size_t batch) {
    if (hooks.on_event) hooks.on_event(e, model, epoch, batch);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch_size);
      std::vector<Tensor> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(patches[train_idx[i]]);

      refresh_quantized_views(model);
      notify(TrainEvent::kQuantize, epoch, batches);
      notify(TrainEvent::kForward, epoch, batches);
      const Evaluation ev = evaluate(model, op, batch, cfg.gamma_loss, true, cfg.workers);
      if (!std::isfinite(ev.loss.total)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches) + " (mse " +
                                 std::to_string(ev.loss.mse) + ", transform " +
                                 std::to_string(ev.loss.transform) + ")");
      }
      notify(TrainEvent::kLoss, epoch, batches);
      adam.begin_step();
      for_each_parameter(model, ev.grad, [&](std::span<double> p, std::span<const double> g) {
        adam.update(p, g);
      });
      project_constraints(model);
      notify(TrainEvent::kUpdate, epoch, batches);

      rec.loss += ev.loss.total;
      rec.mse += ev.loss.mse;
      rec.transform += ev.loss.transform;
      ++batches;
      ++report.steps;
    }
    rec.loss /= static_cast<double>(batches);
    rec.mse /= static_cast<double>(batches);
    rec.transform /= static_cast<double>(batches);

    refresh_quantized_views(model);
    const ValidationScores vs = validate_model(model, op, val, cfg.workers);
    rec.val_psnr = vs.psnr;
    rec.val_ssim = vs.ssim;
    rec.baseline_psnr = vs.baseline_psnr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.on_epoch) hooks.on_epoch(rec);
    report.epochs.push_back(rec);
  }
  refresh_quantized_views(model);
  return report;
}

}  // namespace proxavg
