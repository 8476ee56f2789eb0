#pragma once

// Model checkpoints are directories:
//   manifest.json   variant, regularizers, alphas, sizes, bits, constraint
//                   margins and, per layer, the scalar parameters plus an
//                   entry per bank (tensor indices, scale, code offsets)
//   weights.pavt    PAVT1 tensors: shadow then quantized view for each bank
//   codes.i8        signed 8-bit quantization codes, concatenated
//   sensing.pavt    the measurement matrix, with its sensing.json sidecar

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxavg/network.hpp"
#include "proxavg/sensing.hpp"
#include "proxavg/tensor_io.hpp"

namespace proxavg {

inline constexpr const char* kCheckpointFormat = "proxavg-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  NetworkModel model;
  SensingOperator sensing;
};

inline std::size_t patch_side(const SensingOperator& op) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(op.n()))));
  if (side * side != op.n()) throw std::invalid_argument("sensing dimension is not a square patch");
  return side;
}

inline void save_checkpoint(const std::filesystem::path& dir, const NetworkModel& model,
                            const SensingOperator& op) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Variant v = model.variant();
  const auto names = bank_names(v);

  std::vector<Tensor> tensors;
  std::vector<std::int8_t> codes;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    const Layer& layer = model.layer(k);
    const auto shadow = banks(layer.shadow, v);
    const auto views = banks(model.bits() && model.views_fresh() ? layer.quantized : layer.shadow, v);
    nlohmann::json bank_entries = nlohmann::json::array();
    for (std::size_t b = 0; b < shadow.size(); ++b) {
      nlohmann::json entry = {{"name", names[b]},
                              {"shadow", tensors.size()},
                              {"quantized", tensors.size() + 1}};
      tensors.push_back(shadow[b]->weights);
      tensors.push_back(views[b]->weights);
      if (model.bits() && model.views_fresh()) {
        const QuantSlot& q = layer.quant.at(b);
        entry["scale"] = q.scale;
        entry["codes_offset"] = codes.size();
        entry["codes_count"] = q.codes.size();
        codes.insert(codes.end(), q.codes.begin(), q.codes.end());
      }
      bank_entries.push_back(std::move(entry));
    }
    layers.push_back({{"index", k},
                      {"rho", layer.scalars.rho},
                      {"lambdas", layer.scalars.lambdas},
                      {"gamma_mcp", layer.scalars.gamma_mcp},
                      {"a", layer.scalars.a},
                      {"banks", std::move(bank_entries)}});
  }

  nlohmann::json regs = nlohmann::json::array();
  for (PenaltyKind kind : model.config().penalties) regs.push_back(std::string(penalty_name(kind)));
  nlohmann::json manifest = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"variant", std::string(variant_name(v))},
      {"regularizers", regs},
      {"p", model.config().penalties.size()},
      {"n_l", model.layer_count()},
      {"n_f", model.filters()},
      {"alphas", model.alphas().values()},
      {"bits", model.bits() ? nlohmann::json(*model.bits()) : nlohmann::json(nullptr)},
      {"quantized_views", model.bits().has_value() && model.views_fresh()},
      {"patch_size", patch_side(op)},
      {"cs_ratio", op.cs_ratio()},
      {"sensing_seed", op.seed()},
      {"constraints",
       {{"rho_min", kParamMargin},
        {"lambda_min", kParamMargin},
        {"gamma_mcp_min", shape_lower_bound(PenaltyKind::kMCP)},
        {"a_min", shape_lower_bound(PenaltyKind::kSCAD)}}},
      {"layers", std::move(layers)}};

  save_tensors(dir / "weights.pavt", tensors);
  {
    std::ofstream os(dir / "codes.i8", std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write codes.i8");
    os.write(reinterpret_cast<const char*>(codes.data()), static_cast<std::streamsize>(codes.size()));
  }
  save_sensing(dir / "sensing", op);
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest.json");
  os << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  const nlohmann::json manifest = nlohmann::json::parse(is);
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("not a proxavg checkpoint: " + dir.string());
  }
  if (manifest.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }

  ModelConfig cfg;
  cfg.variant = parse_variant(manifest.at("variant").get<std::string>());
  cfg.penalties.clear();
  for (const auto& r : manifest.at("regularizers")) cfg.penalties.push_back(parse_penalty(r.get<std::string>()));
  cfg.alphas = manifest.at("alphas").get<std::vector<double>>();
  cfg.layers = manifest.at("n_l").get<std::size_t>();
  cfg.filters = manifest.at("n_f").get<std::size_t>();
  if (!manifest.at("bits").is_null()) cfg.bits = manifest.at("bits").get<int>();
  const bool have_views = manifest.value("quantized_views", false);

  const std::vector<Tensor> tensors = load_tensors(dir / "weights.pavt");
  std::vector<std::int8_t> codes;
  {
    std::ifstream cs(dir / "codes.i8", std::ios::binary);
    if (!cs) throw std::runtime_error("cannot open codes.i8");
    codes.assign(std::istreambuf_iterator<char>(cs), std::istreambuf_iterator<char>());
  }

  const auto names = bank_names(cfg.variant);
  const auto roles = bank_roles(cfg.variant);
  std::vector<Layer> layers(cfg.layers);
  const auto& layer_json = manifest.at("layers");
  if (layer_json.size() != cfg.layers) throw std::runtime_error("manifest layer count mismatch");
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    const auto& lj = layer_json.at(k);
    Layer& layer = layers[k];
    layer.scalars.rho = lj.at("rho").get<double>();
    layer.scalars.lambdas = lj.at("lambdas").get<std::vector<double>>();
    layer.scalars.gamma_mcp = lj.at("gamma_mcp").get<double>();
    layer.scalars.a = lj.at("a").get<double>();
    auto shadow = banks(layer.shadow, cfg.variant);
    auto views = banks(layer.quantized, cfg.variant);
    const auto& bj = lj.at("banks");
    if (bj.size() != names.size()) throw std::runtime_error("manifest bank count mismatch");
    layer.quant.assign(names.size(), QuantSlot{});
    for (std::size_t b = 0; b < names.size(); ++b) {
      const auto& entry = bj.at(b);
      if (entry.at("name").get<std::string>() != names[b]) {
        throw std::runtime_error("manifest bank order mismatch at layer " + std::to_string(k));
      }
      *shadow[b] = FilterBank(tensors.at(entry.at("shadow").get<std::size_t>()), roles[b]);
      *views[b] = FilterBank(tensors.at(entry.at("quantized").get<std::size_t>()), roles[b]);
      if (have_views) {
        const auto off = entry.at("codes_offset").get<std::size_t>();
        const auto cnt = entry.at("codes_count").get<std::size_t>();
        if (off + cnt > codes.size()) throw std::runtime_error("codes.i8 is truncated");
        layer.quant[b].scale = entry.at("scale").get<double>();
        layer.quant[b].codes.assign(codes.begin() + static_cast<std::ptrdiff_t>(off),
                                    codes.begin() + static_cast<std::ptrdiff_t>(off + cnt));
      }
    }
  }
  Checkpoint ck{NetworkModel(cfg, std::move(layers)), load_sensing(dir / "sensing")};
  if (have_views) ck.model.mark_views_fresh();
  return ck;
}

}  // namespace proxavg
