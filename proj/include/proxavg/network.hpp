#pragma once

// Unfolded proximal-averaging networks. Each layer takes the gradient step
// r = x - rho Phi^T (Phi x - y) and then either
//   PAN : x = F~(sum_i alpha_i P_i(F(r)))
//   PAN+: x = r + G(H~(sum_i alpha_i P_i(H(D(r)))))
// with per-layer learnable rho, lambdas, gamma (MCP), a (SCAD) and filter
// banks. With quantization enabled, every convolution uses the quantized view
// of its bank; gradients evaluated at those views are applied to the
// full-precision shadow weights.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "proxavg/penalties.hpp"
#include "proxavg/quantization.hpp"
#include "proxavg/sensing.hpp"
#include "proxavg/solver.hpp"
#include "proxavg/tensor.hpp"
#include "proxavg/transforms.hpp"

namespace proxavg {

enum class Variant { kPAN, kPANPlus };

inline std::string_view variant_name(Variant v) { return v == Variant::kPAN ? "pan" : "pan+"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "pan") return Variant::kPAN;
  if (s == "pan+" || s == "panplus") return Variant::kPANPlus;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "' (expected pan or pan+)");
}

/// 1R = {l1}, 2R = {l1, mcp}, 3R = {l1, mcp, scad}.
inline std::vector<PenaltyKind> regularizer_set(int count) {
  switch (count) {
    case 1: return {PenaltyKind::kL1};
    case 2: return {PenaltyKind::kL1, PenaltyKind::kMCP};
    case 3: return {PenaltyKind::kL1, PenaltyKind::kMCP, PenaltyKind::kSCAD};
    default: throw std::invalid_argument("regularizer count must be 1, 2 or 3");
  }
}

struct ModelConfig {
  Variant variant = Variant::kPANPlus;
  std::vector<PenaltyKind> penalties = regularizer_set(3);
  std::vector<double> alphas;  // empty: uniform 1/p
  std::size_t layers = 9;
  std::size_t filters = 32;
  std::optional<int> bits;  // unset: full precision
  double rho_init = 1.0;
  double lambda_init = 0.1;
  double gamma_init = 2.0;
  double a_init = 3.7;
};

struct ScalarParams {
  double rho = 1.0;
  std::vector<double> lambdas;  // one per penalty
  double gamma_mcp = 2.0;
  double a = 3.7;
};

/// Filter banks of one layer. Only the members matching the model variant
/// are populated.
struct LayerWeights {
  AnalysisTransform analysis;
  SynthesisTransform synthesis;
  PlusTransform plus;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

inline std::vector<std::string_view> bank_names(Variant v) {
  if (v == Variant::kPAN) return {"A", "B", "Bt", "At"};
  return {"D", "H1", "H2", "Ht1", "Ht2", "G"};
}

inline std::vector<BankRole> bank_roles(Variant v) {
  if (v == Variant::kPAN) {
    return {BankRole::kAnalysisA, BankRole::kAnalysisB, BankRole::kSynthesisB, BankRole::kSynthesisA};
  }
  return {BankRole::kResidualD, BankRole::kPlusH1, BankRole::kPlusH2,
          BankRole::kPlusHt1,   BankRole::kPlusHt2, BankRole::kResidualG};
}

inline std::vector<FilterBank*> banks(LayerWeights& w, Variant v) {
  if (v == Variant::kPAN) {
    return {&w.analysis.A, &w.analysis.B, &w.synthesis.Bt, &w.synthesis.At};
  }
  return {&w.plus.D, &w.plus.H1, &w.plus.H2, &w.plus.Ht1, &w.plus.Ht2, &w.plus.G};
}

inline std::vector<const FilterBank*> banks(const LayerWeights& w, Variant v) {
  std::vector<const FilterBank*> out;
  for (FilterBank* b : banks(const_cast<LayerWeights&>(w), v)) out.push_back(b);
  return out;
}

struct QuantSlot {
  double scale = 0.0;
  std::vector<std::int8_t> codes;
};

struct Layer {
  ScalarParams scalars;
  LayerWeights shadow;
  LayerWeights quantized;
  std::vector<QuantSlot> quant;  // one per bank, same order as bank_names
};

class NetworkModel {
 public:
  NetworkModel() = default;

  NetworkModel(ModelConfig config, std::vector<Layer> layers)
      : config_(std::move(config)), layers_(std::move(layers)) {
    if (config_.alphas.empty()) {
      config_.alphas = MixtureWeights::uniform(config_.penalties.size()).values();
    }
    alphas_ = MixtureWeights(config_.alphas);
    if (alphas_.size() != config_.penalties.size()) {
      throw std::invalid_argument("model: " + std::to_string(config_.penalties.size()) +
                                  " penalties but " + std::to_string(alphas_.size()) +
                                  " mixture weights");
    }
    if (config_.bits) check_bits(*config_.bits);
    if (layers_.empty()) throw std::invalid_argument("model: no layers");
    for (const Layer& l : layers_) {
      if (l.scalars.lambdas.size() != config_.penalties.size()) {
        throw std::invalid_argument("model: layer lambda count mismatch");
      }
    }
  }

  template <class Rng>
  static NetworkModel create(const ModelConfig& cfg, Rng& rng) {
    if (cfg.layers == 0 || cfg.filters == 0) {
      throw std::invalid_argument("model: layers and filters must be positive");
    }
    std::vector<Layer> layers(cfg.layers);
    for (Layer& l : layers) {
      l.scalars.rho = cfg.rho_init;
      l.scalars.lambdas.assign(cfg.penalties.size(), cfg.lambda_init);
      l.scalars.gamma_mcp = cfg.gamma_init;
      l.scalars.a = cfg.a_init;
      if (cfg.variant == Variant::kPAN) {
        l.shadow.analysis = AnalysisTransform::random(cfg.filters, rng);
        l.shadow.synthesis = SynthesisTransform::random(cfg.filters, rng);
      } else {
        l.shadow.plus = PlusTransform::random(cfg.filters, rng);
      }
      l.quantized = l.shadow;
      l.quant.assign(bank_names(cfg.variant).size(), QuantSlot{});
    }
    return NetworkModel(cfg, std::move(layers));
  }

  static NetworkModel create(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return create(cfg, rng);
  }

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  const MixtureWeights& alphas() const { return alphas_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t filters() const { return config_.filters; }
  std::optional<int> bits() const { return config_.bits; }
  bool quantization_enabled() const { return config_.bits.has_value(); }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  Layer& layer(std::size_t k) { return layers_.at(k); }
  const Layer& layer(std::size_t k) const { return layers_.at(k); }

  bool views_fresh() const { return views_fresh_; }
  /// Must be called whenever shadow weights change.
  void invalidate_views() { views_fresh_ = false; }
  void mark_views_fresh() { views_fresh_ = true; }

  /// Weights used by forward passes: the quantized views under quantization,
  /// the shadow weights otherwise.
  const LayerWeights& effective(std::size_t k) const {
    if (!quantization_enabled()) return layers_.at(k).shadow;
    if (!views_fresh_) {
      throw std::logic_error("quantized views are stale; call refresh_quantized_views first");
    }
    return layers_.at(k).quantized;
  }

  std::vector<PenaltySpec> penalties(std::size_t k) const {
    const ScalarParams& s = layers_.at(k).scalars;
    std::vector<PenaltySpec> out;
    out.reserve(config_.penalties.size());
    for (std::size_t i = 0; i < config_.penalties.size(); ++i) {
      const PenaltyKind kind = config_.penalties[i];
      const double shape = kind == PenaltyKind::kMCP ? s.gamma_mcp
                           : kind == PenaltyKind::kSCAD ? s.a
                                                        : 0.0;
      out.push_back(PenaltySpec::make(kind, s.lambdas[i], shape));
    }
    return out;
  }

  bool uses(PenaltyKind kind) const {
    return std::find(config_.penalties.begin(), config_.penalties.end(), kind) !=
           config_.penalties.end();
  }

 private:
  ModelConfig config_;
  MixtureWeights alphas_;
  std::vector<Layer> layers_;
  bool views_fresh_ = false;
};

/// W_Q <- Q(W) for every bank of every layer. Shadow weights are read only.
/// Without quantization the views simply mirror the shadows.
inline void refresh_quantized_views(NetworkModel& model) {
  const Variant v = model.variant();
  for (Layer& layer : model.layers()) {
    auto shadow = banks(std::as_const(layer.shadow), v);
    auto views = banks(layer.quantized, v);
    layer.quant.resize(shadow.size());
    for (std::size_t i = 0; i < shadow.size(); ++i) {
      if (model.bits()) {
        QuantizedWeights q = fit_and_quantize(shadow[i]->weights, *model.bits());
        views[i]->weights = std::move(q.values);
        layer.quant[i] = {q.scale, std::move(q.codes)};
      } else {
        views[i]->weights = shadow[i]->weights;
        layer.quant[i] = {};
      }
      views[i]->role = shadow[i]->role;
    }
  }
  model.mark_views_fresh();
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct LayerTape {
  Tensor x_in;
  Tensor u;  // PAN: F(r), the shrinkage input
  ConvPairTape f;
  ConvPairTape ft;
  PlusTape plus;
};

struct SampleTape {
  std::vector<LayerTape> layers;
  Tensor y;
  const NetworkModel* model = nullptr;
};

/// One patch through all layers. x0 is the initial estimate (usually Phi^T y)
/// shaped [1,H,W].
inline Tensor forward_sample(const NetworkModel& model, const SensingOperator& op,
                             const Tensor& y, const Tensor& x0, SampleTape* tape = nullptr) {
  if (x0.rank() != 3 || x0.extent(0) != 1 || x0.size() != op.n()) {
    throw std::invalid_argument("forward: x0 must be [1,H,W] with H*W = " +
                                std::to_string(op.n()) + ", got " + shape_string(x0.shape()));
  }
  if (y.size() != op.m()) {
    throw std::invalid_argument("forward: expected " + std::to_string(op.m()) +
                                " measurements, got " + std::to_string(y.size()));
  }
  if (tape) {
    tape->layers.assign(model.layer_count(), LayerTape{});
    tape->y = y;
    tape->model = &model;
  }
  Tensor x = x0;
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    const LayerWeights& w = model.effective(k);
    const std::vector<PenaltySpec> specs = model.penalties(k);
    LayerTape* lt = tape ? &tape->layers[k] : nullptr;
    if (lt) lt->x_in = x;
    const Tensor r = gradient_step(op, x, y, model.layer(k).scalars.rho);
    if (model.variant() == Variant::kPAN) {
      Tensor u = forward_F(w.analysis, r, lt ? &lt->f : nullptr);
      const Tensor z = prox_average(specs, model.alphas(), u);
      x = forward_Ftilde(w.synthesis, z, lt ? &lt->ft : nullptr);
      if (lt) lt->u = std::move(u);
    } else {
      x = forward_plus(
          w.plus, r, [&](const Tensor& u) { return prox_average(specs, model.alphas(), u); },
          lt ? &lt->plus : nullptr);
    }
  }
  return x;
}

inline std::vector<Tensor> forward(const NetworkModel& model, const SensingOperator& op,
                                   const std::vector<Tensor>& y_batch,
                                   const std::vector<Tensor>& x0_batch,
                                   std::vector<SampleTape>* tapes = nullptr) {
  if (y_batch.size() != x0_batch.size()) {
    throw std::invalid_argument("forward: batch size mismatch");
  }
  if (tapes) tapes->assign(y_batch.size(), SampleTape{});
  std::vector<Tensor> out;
  out.reserve(y_batch.size());
  for (std::size_t b = 0; b < y_batch.size(); ++b) {
    out.push_back(forward_sample(model, op, y_batch[b], x0_batch[b], tapes ? &(*tapes)[b] : nullptr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossValue {
  double total = 0.0;
  double mse = 0.0;        // (1/N) sum ||x_hat - x||^2
  double transform = 0.0;  // (1/N) sum_i sum_k ||inverse(forward(x_i)) - target||^2
};

/// Per-layer invertibility residual for one patch: F~(F(x)) - x for PAN,
/// H~(H(D(x))) - D(x) for PAN+.
inline Tensor transform_residual(const NetworkModel& model, std::size_t k, const Tensor& x) {
  const LayerWeights& w = model.effective(k);
  if (model.variant() == Variant::kPAN) {
    return forward_Ftilde(w.synthesis, forward_F(w.analysis, x)) - x;
  }
  const Tensor d = conv2d(x, w.plus.D);
  return conv_relu_conv(w.plus.Ht1, w.plus.Ht2, conv_relu_conv(w.plus.H1, w.plus.H2, d)) - d;
}

inline LossValue loss(const NetworkModel& model, const std::vector<Tensor>& x_hat,
                      const std::vector<Tensor>& x, double gamma_loss) {
  if (x_hat.size() != x.size() || x.empty()) {
    throw std::invalid_argument("loss: batch size mismatch");
  }
  const double n_total = static_cast<double>(x.size() * x.front().size());
  LossValue out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.mse += squared_norm(x_hat[i] - x[i]);
    if (gamma_loss != 0.0) {
      for (std::size_t k = 0; k < model.layer_count(); ++k) {
        out.transform += squared_norm(transform_residual(model, k, x[i]));
      }
    }
  }
  out.mse /= n_total;
  out.transform /= n_total;
  out.total = out.mse + gamma_loss * out.transform;
  return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct LayerGrad {
  double rho = 0.0;
  std::vector<double> lambdas;
  double gamma_mcp = 0.0;
  double a = 0.0;
  LayerWeights banks;
};

using ModelGrad = std::vector<LayerGrad>;

inline ModelGrad zero_grad(const NetworkModel& model) {
  ModelGrad g(model.layer_count());
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k].lambdas.assign(model.config().penalties.size(), 0.0);
    const LayerWeights& w = model.layer(k).shadow;
    g[k].banks = w;
    for (FilterBank* b : banks(g[k].banks, model.variant())) b->weights.fill(0.0);
  }
  return g;
}

inline void accumulate(ModelGrad& into, const ModelGrad& from, Variant v) {
  for (std::size_t k = 0; k < into.size(); ++k) {
    into[k].rho += from[k].rho;
    for (std::size_t i = 0; i < into[k].lambdas.size(); ++i) into[k].lambdas[i] += from[k].lambdas[i];
    into[k].gamma_mcp += from[k].gamma_mcp;
    into[k].a += from[k].a;
    auto dst = banks(into[k].banks, v);
    auto src = banks(from[k].banks, v);
    for (std::size_t b = 0; b < dst.size(); ++b) dst[b]->weights += src[b]->weights;
  }
}

namespace detail {

inline void add_prox_param_grads(const NetworkModel& model, const ProxAverageGrad& pa,
                                 LayerGrad& g) {
  for (std::size_t i = 0; i < pa.params.size(); ++i) {
    g.lambdas[i] += pa.params[i].d_lambda;
    switch (model.config().penalties[i]) {
      case PenaltyKind::kMCP: g.gamma_mcp += pa.params[i].d_shape; break;
      case PenaltyKind::kSCAD: g.a += pa.params[i].d_shape; break;
      default: break;
    }
  }
}

/// Gradient of gamma_loss/N * sum_k ||transform_residual(k, x)||^2 with
/// respect to the filter banks, accumulated into `grad`.
inline void backward_transform_term(const NetworkModel& model, const Tensor& x, double scale,
                                    ModelGrad& grad) {
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    const LayerWeights& w = model.effective(k);
    LayerWeights& g = grad[k].banks;
    if (model.variant() == Variant::kPAN) {
      ConvPairTape f_tape;
      ConvPairTape ft_tape;
      const Tensor fx = forward_F(w.analysis, x, &f_tape);
      const Tensor e = forward_Ftilde(w.synthesis, fx, &ft_tape) - x;
      const SynthesisGrad sg = backward_Ftilde(w.synthesis, ft_tape, e * scale);
      const AnalysisGrad ag = backward_F(w.analysis, f_tape, sg.input);
      g.synthesis.Bt.weights += sg.Bt;
      g.synthesis.At.weights += sg.At;
      g.analysis.A.weights += ag.A;
      g.analysis.B.weights += ag.B;
    } else {
      const PlusTransform& p = w.plus;
      ConvPairTape h_tape;
      ConvPairTape ht_tape;
      const Tensor d = conv2d(x, p.D);
      const Tensor hd = conv_relu_conv(p.H1, p.H2, d, &h_tape);
      const Tensor ge = (conv_relu_conv(p.Ht1, p.Ht2, hd, &ht_tape) - d) * scale;
      const ConvPairGrad ht = conv_relu_conv_backward(p.Ht1, p.Ht2, ht_tape, ge);
      const ConvPairGrad h = conv_relu_conv_backward(p.H1, p.H2, h_tape, ht.input);
      g.plus.Ht1.weights += ht.first;
      g.plus.Ht2.weights += ht.second;
      g.plus.H1.weights += h.first;
      g.plus.H2.weights += h.second;
      g.plus.D.weights += conv2d_weight_grad(x, h.input - ge);
    }
  }
}

}  // namespace detail

/// Reverse pass for one sample, accumulating d loss / d params into `grad`.
/// `n_total` is N = batch size * patch size.
inline void backward_sample(const NetworkModel& model, const SensingOperator& op,
                            const SampleTape& tape, const Tensor& x_hat, const Tensor& x,
                            double gamma_loss, double n_total, ModelGrad& grad) {
  if (tape.model != &model || tape.layers.size() != model.layer_count()) {
    throw std::logic_error("backward: tape was not recorded by this model");
  }
  Tensor g = (x_hat - x) * (2.0 / n_total);
  for (std::size_t kk = model.layer_count(); kk-- > 0;) {
    const LayerTape& lt = tape.layers[kk];
    const LayerWeights& w = model.effective(kk);
    const std::vector<PenaltySpec> specs = model.penalties(kk);
    LayerGrad& lg = grad[kk];
    Tensor g_r;
    if (model.variant() == Variant::kPAN) {
      const SynthesisGrad sg = backward_Ftilde(w.synthesis, lt.ft, g);
      const ProxAverageGrad pa = prox_average_backward(specs, model.alphas(), lt.u, sg.input);
      detail::add_prox_param_grads(model, pa, lg);
      const AnalysisGrad ag = backward_F(w.analysis, lt.f, pa.input);
      lg.banks.synthesis.Bt.weights += sg.Bt;
      lg.banks.synthesis.At.weights += sg.At;
      lg.banks.analysis.A.weights += ag.A;
      lg.banks.analysis.B.weights += ag.B;
      g_r = ag.input;
    } else {
      PlusGrad pg = backward_plus(w.plus, lt.plus, g, [&](const Tensor& u, const Tensor& gz) {
        ProxAverageGrad pa = prox_average_backward(specs, model.alphas(), u, gz);
        detail::add_prox_param_grads(model, pa, lg);
        return std::move(pa.input);
      });
      lg.banks.plus.D.weights += pg.D;
      lg.banks.plus.H1.weights += pg.H1;
      lg.banks.plus.H2.weights += pg.H2;
      lg.banks.plus.Ht1.weights += pg.Ht1;
      lg.banks.plus.Ht2.weights += pg.Ht2;
      lg.banks.plus.G.weights += pg.G;
      g_r = std::move(pg.input);
    }
    // r = x - rho Phi^T (Phi x - y)
    const double rho = model.layer(kk).scalars.rho;
    Tensor res = op.measure(lt.x_in);
    res -= tape.y.reshaped(res.shape());
    const Tensor back = op.adjoint(res);
    lg.rho -= dot(g_r.data(), back.data());
    const Tensor normal = op.adjoint(op.measure(g_r));
    for (std::size_t j = 0; j < g_r.size(); ++j) g_r[j] -= rho * normal[j];
    g = std::move(g_r);
  }
  if (gamma_loss != 0.0) {
    detail::backward_transform_term(model, x, 2.0 * gamma_loss / n_total, grad);
  }
}

inline ModelGrad backward(const NetworkModel& model, const SensingOperator& op,
                          const std::vector<SampleTape>& tapes, const std::vector<Tensor>& x_hat,
                          const std::vector<Tensor>& x, double gamma_loss) {
  if (tapes.size() != x.size() || x_hat.size() != x.size() || x.empty()) {
    throw std::invalid_argument("backward: batch size mismatch");
  }
  const double n_total = static_cast<double>(x.size() * x.front().size());
  ModelGrad grad = zero_grad(model);
  for (std::size_t i = 0; i < x.size(); ++i) {
    backward_sample(model, op, tapes[i], x_hat[i], x[i], gamma_loss, n_total, grad);
  }
  return grad;
}

struct Evaluation {
  LossValue loss;
  ModelGrad grad;
  std::vector<Tensor> x_hat;
};

/// Forward, loss and (optionally) gradients over a batch of ground-truth
/// patches. Samples are split into `workers` contiguous chunks; chunk results
/// are reduced in chunk order, so the result only depends on the worker count.
inline Evaluation evaluate(const NetworkModel& model, const SensingOperator& op,
                           const std::vector<Tensor>& x_batch, double gamma_loss,
                           bool with_grad = true, unsigned workers = 1) {
  if (x_batch.empty()) throw std::invalid_argument("evaluate: empty batch");
  const std::size_t n_b = x_batch.size();
  const double n_total = static_cast<double>(n_b * x_batch.front().size());
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_b)));

  struct Partial {
    double mse = 0.0;
    double transform = 0.0;
    ModelGrad grad;
  };
  std::vector<Partial> partials(workers);
  Evaluation out;
  out.x_hat.resize(n_b);

  auto run_chunk = [&](unsigned c) {
    const std::size_t begin = n_b * c / workers;
    const std::size_t end = n_b * (c + 1) / workers;
    Partial& p = partials[c];
    if (with_grad) p.grad = zero_grad(model);
    for (std::size_t i = begin; i < end; ++i) {
      const Tensor& x = x_batch[i];
      const Tensor y = op.measure(x);
      const Tensor x0 = op.adjoint(y).reshaped(x.shape());
      SampleTape tape;
      out.x_hat[i] = forward_sample(model, op, y, x0, with_grad ? &tape : nullptr);
      p.mse += squared_norm(out.x_hat[i] - x);
      if (gamma_loss != 0.0) {
        for (std::size_t k = 0; k < model.layer_count(); ++k) {
          p.transform += squared_norm(transform_residual(model, k, x));
        }
      }
      if (with_grad) backward_sample(model, op, tape, out.x_hat[i], x, gamma_loss, n_total, p.grad);
    }
  };

  if (workers == 1) {
    run_chunk(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned c = 0; c < workers; ++c) pool.emplace_back(run_chunk, c);
  }

  double mse = 0.0;
  double transform = 0.0;
  for (unsigned c = 0; c < workers; ++c) {
    mse += partials[c].mse;
    transform += partials[c].transform;
    if (with_grad) {
      if (c == 0) {
        out.grad = std::move(partials[0].grad);
      } else {
        accumulate(out.grad, partials[c].grad, model.variant());
      }
    }
  }
  out.loss.mse = mse / n_total;
  out.loss.transform = transform / n_total;
  out.loss.total = out.loss.mse + gamma_loss * out.loss.transform;
  return out;
}

// ---------------------------------------------------------------------------
// Parameter access
// ---------------------------------------------------------------------------

/// Calls f(params, grads) for every learnable group in a fixed order:
/// per layer rho, lambdas, gamma (if MCP is used), a (if SCAD is used), then
/// the shadow filter banks.
template <class F>
void for_each_parameter(NetworkModel& model, const ModelGrad& grad, F&& f) {
  const Variant v = model.variant();
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    Layer& layer = model.layer(k);
    const LayerGrad& g = grad.at(k);
    f(std::span<double>(&layer.scalars.rho, 1), std::span<const double>(&g.rho, 1));
    f(std::span<double>(layer.scalars.lambdas), std::span<const double>(g.lambdas));
    if (model.uses(PenaltyKind::kMCP)) {
      f(std::span<double>(&layer.scalars.gamma_mcp, 1), std::span<const double>(&g.gamma_mcp, 1));
    }
    if (model.uses(PenaltyKind::kSCAD)) {
      f(std::span<double>(&layer.scalars.a, 1), std::span<const double>(&g.a, 1));
    }
    auto dst = banks(layer.shadow, v);
    auto src = banks(g.banks, v);
    for (std::size_t b = 0; b < dst.size(); ++b) {
      f(dst[b]->weights.data(), src[b]->weights.data());
    }
  }
  model.invalidate_views();
}

/// Clamps rho, lambdas, gamma and a back to their margins; parameters that
/// already satisfy their bounds are left untouched.
inline void project_constraints(NetworkModel& model) {
  for (Layer& layer : model.layers()) {
    ScalarParams& s = layer.scalars;
    if (!(s.rho >= kParamMargin)) s.rho = kParamMargin;
    for (double& l : s.lambdas) {
      if (!(l >= kParamMargin)) l = kParamMargin;
    }
    if (!(s.gamma_mcp >= shape_lower_bound(PenaltyKind::kMCP))) {
      s.gamma_mcp = shape_lower_bound(PenaltyKind::kMCP);
    }
    if (!(s.a >= shape_lower_bound(PenaltyKind::kSCAD))) {
      s.a = shape_lower_bound(PenaltyKind::kSCAD);
    }
  }
}

inline bool constraints_hold(const NetworkModel& model) {
  for (const Layer& layer : model.layers()) {
    const ScalarParams& s = layer.scalars;
    if (!(s.rho >= kParamMargin)) return false;
    for (double l : s.lambdas) {
      if (!(l >= kParamMargin)) return false;
    }
    if (!(s.gamma_mcp >= shape_lower_bound(PenaltyKind::kMCP))) return false;
    if (!(s.a >= shape_lower_bound(PenaltyKind::kSCAD))) return false;
  }
  return true;
}

}  // namespace proxavg
