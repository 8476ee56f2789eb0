#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "proxavg/proxavg.hpp"

namespace fs = std::filesystem;
using namespace proxavg;

namespace {

struct Globals {
  bool json = false;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("not a number: " + item);
    out.push_back(v);
  }
  return out;
}

std::optional<int> parse_bits(const std::string& s) {
  if (s == "full") return std::nullopt;
  std::size_t used = 0;
  const int b = std::stoi(s, &used);
  if (used != s.size()) throw std::invalid_argument("--bits must be 1..8 or full");
  check_bits(b);
  return b;
}

std::vector<fs::path> pgm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .pgm files in " + dir.string());
  return files;
}

// ---------------------------------------------------------------------------
// proxcheck
// ---------------------------------------------------------------------------

struct ProxCheckArgs {
  std::size_t draws = 1000;
  double step = 1e-4;
  double tolerance = 2e-4;
};

int run_proxcheck(const ProxCheckArgs& a, const Globals& g) {
  const ProxCheckReport rep = run_prox_check(a.draws, g.seed, a.step);
  std::size_t worst = 0;
  for (std::size_t i = 1; i < rep.draws.size(); ++i) {
    if (std::abs(rep.draws[i].closed_form - rep.draws[i].grid) >
        std::abs(rep.draws[worst].closed_form - rep.draws[worst].grid)) {
      worst = i;
    }
  }
  const ProxCheckDraw& w = rep.draws[worst];
  std::cout << "draws " << rep.draws.size() << "\n"
            << "max_deviation " << std::setprecision(6) << rep.max_deviation << "\n"
            << "worst " << penalty_name(w.spec.kind()) << " lambda=" << w.spec.lambda()
            << " shape=" << w.spec.shape() << " x=" << w.x << "\n";
  return rep.max_deviation <= a.tolerance ? 0 : 1;
}

// ---------------------------------------------------------------------------
// paisa
// ---------------------------------------------------------------------------

struct PaisaArgs {
  double cs_ratio = 0.25;
  int iters = 10;
  std::string penalties = "l1,mcp,scad";
  std::string alphas;
  double lambda = 0.01;
  double gamma = 2.0;
  double a = 3.7;
  double rho = 1.0;
  std::size_t patch = 33;
  std::size_t filters = 4;
  std::string banks;
  std::string trace;
  std::string input;
  std::string output;
};

int run_paisa_cmd(const PaisaArgs& a, const Globals& g) {
  SolverConfig cfg;
  cfg.iterations = a.iters;
  cfg.rho = a.rho;
  for (const auto& name : split_list(a.penalties)) {
    const PenaltyKind kind = parse_penalty(name);
    const double shape = kind == PenaltyKind::kMCP ? a.gamma : kind == PenaltyKind::kSCAD ? a.a : 0.0;
    cfg.penalties.push_back(PenaltySpec::make(kind, a.lambda, shape));
  }
  cfg.alphas = a.alphas.empty() ? MixtureWeights::uniform(cfg.penalties.size())
                                : MixtureWeights(parse_doubles(a.alphas));
  cfg.validate();

  bool plus = false;
  AnalysisTransform analysis = AnalysisTransform::identity(a.filters);
  SynthesisTransform synthesis = SynthesisTransform::identity(a.filters);
  PlusTransform plus_t;
  if (!a.banks.empty()) {
    const std::vector<Tensor> t = load_tensors(a.banks);
    if (t.size() == 4) {
      analysis = {FilterBank(t[0], BankRole::kAnalysisA), FilterBank(t[1], BankRole::kAnalysisB)};
      synthesis = {FilterBank(t[2], BankRole::kSynthesisB), FilterBank(t[3], BankRole::kSynthesisA)};
    } else if (t.size() == 6) {
      plus = true;
      plus_t = {FilterBank(t[0], BankRole::kResidualD), FilterBank(t[1], BankRole::kPlusH1),
                FilterBank(t[2], BankRole::kPlusH2),    FilterBank(t[3], BankRole::kPlusHt1),
                FilterBank(t[4], BankRole::kPlusHt2),   FilterBank(t[5], BankRole::kResidualG)};
    } else {
      throw std::invalid_argument("--banks must hold 4 (A,B,Bt,At) or 6 (D,H1,H2,Ht1,Ht2,G) tensors");
    }
  }

  const Tensor img = load_pgm(a.input);
  const SensingOperator op = make_sensing(a.patch * a.patch, a.cs_ratio, g.seed);
  const std::vector<Tensor> tiles = tile_image(img, a.patch);
  std::vector<Tensor> out_tiles;
  std::vector<double> objective(static_cast<std::size_t>(a.iters), 0.0);
  std::vector<double> residual_sq(static_cast<std::size_t>(a.iters), 0.0);
  for (const Tensor& tile : tiles) {
    const Tensor y = op.measure(tile);
    const SolveResult r = plus ? run_paisa_plus(cfg, plus_t, op, y, a.patch, a.patch)
                               : run_paisa(cfg, analysis, synthesis, op, y, a.patch, a.patch);
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
      objective[k] += r.trace[k].objective;
      residual_sq[k] += r.trace[k].residual_norm * r.trace[k].residual_norm;
    }
    out_tiles.push_back(r.x);
  }
  const Tensor rec = untile_image(out_tiles, img.extent(0), img.extent(1), a.patch);
  save_pgm(a.output, rec);
  if (!a.trace.empty()) {
    std::ofstream os(a.trace);
    if (!os) throw std::runtime_error("cannot write " + a.trace);
    os << "iteration,objective,residual_norm\n" << std::setprecision(17);
    for (std::size_t k = 0; k < objective.size(); ++k) {
      os << k + 1 << ',' << objective[k] << ',' << std::sqrt(residual_sq[k]) << '\n';
    }
  }
  std::cout << "psnr_db " << std::fixed << std::setprecision(4) << psnr(rec, img) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::optional<std::size_t> synthetic;
  std::optional<std::string> variant;
  std::optional<int> regs;
  std::optional<std::string> bits;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> filters;
  std::optional<double> cs_ratio;
  std::optional<std::size_t> patch;
  std::optional<std::size_t> stride;
  std::string out;
  std::string log;
};

int run_train(const TrainArgs& a, const Globals& g, bool seed_given) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.config.empty()) {
    std::ifstream is(a.config);
    if (!is) throw std::runtime_error("cannot open " + a.config);
    j = nlohmann::json::parse(is);
  }
  if (a.bits) {
    const auto b = parse_bits(*a.bits);
    j["bits"] = b ? nlohmann::json(*b) : nlohmann::json("full");
  }
  if (a.epochs) j["epochs"] = *a.epochs;
  if (a.batch_size) j["batch_size"] = *a.batch_size;
  if (a.learning_rate) j["learning_rate"] = *a.learning_rate;
  if (a.patch) j["patch_size"] = *a.patch;
  if (seed_given || !j.contains("seed")) j["seed"] = g.seed;
  if (!j.contains("workers")) j["workers"] = g.workers;
  TrainConfig tc = train_config_from_json(j);

  ModelConfig mc;
  mc.variant = parse_variant(a.variant.value_or(j.value("variant", std::string("pan+"))));
  mc.penalties = regularizer_set(a.regs.value_or(j.value("regs", 3)));
  mc.layers = a.layers.value_or(j.value("layers", std::size_t{9}));
  mc.filters = a.filters.value_or(j.value("filters", std::size_t{32}));
  mc.bits = tc.bits;
  const double cs_ratio = a.cs_ratio.value_or(j.value("cs_ratio", 0.25));
  const std::size_t stride = a.stride.value_or(j.value("stride", tc.patch_size));
  const std::size_t synthetic = a.synthetic.value_or(j.value("synthetic", std::size_t{0}));

  std::vector<Tensor> patches;
  if (!a.data.empty()) {
    std::vector<Tensor> images;
    for (const auto& f : pgm_files(a.data)) images.push_back(load_pgm(f));
    PatchSet ps = extract_patches(images, tc.patch_size, stride, tc.seed);
    for (const auto& w : ps.skipped) std::cerr << "warning: " << w << "\n";
    patches = std::move(ps.patches);
  } else if (synthetic > 0) {
    patches = synthetic_piecewise_smooth(synthetic, tc.patch_size, tc.seed + 3);
  } else {
    throw std::invalid_argument("train needs --data DIR or --synthetic N");
  }
  if (patches.empty()) throw std::runtime_error("no training patches");

  const SensingOperator op = make_sensing(tc.patch_size * tc.patch_size, cs_ratio, tc.seed + 2);
  NetworkModel model = NetworkModel::create(mc, tc.seed + 1);

  const fs::path out = a.out;
  fs::create_directories(out);
  const fs::path log_path = a.log.empty() ? out / "train_log.jsonl" : fs::path(a.log);
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());

  std::cout << "patches " << patches.size() << " variant " << variant_name(mc.variant) << " regs "
            << mc.penalties.size() << " bits " << (mc.bits ? std::to_string(*mc.bits) : "full")
            << "\n";
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    const std::string line = epoch_log_line(r);
    log << line << '\n';
    log.flush();
    std::cout << line << "  (" << std::fixed << std::setprecision(1) << r.seconds << " s)\n"
              << std::defaultfloat;
  };
  TrainReport rep = train(model, op, patches, tc, hooks);
  save_checkpoint(out, model, op);
  rep.checkpoint = out.string();
  std::cout << "steps " << rep.steps << "\ncheckpoint " << rep.checkpoint << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct / eval
// ---------------------------------------------------------------------------

Checkpoint load_model(const std::string& dir, std::optional<double> cs_ratio) {
  Checkpoint c = load_checkpoint(dir);
  if (cs_ratio && std::abs(*cs_ratio - c.sensing.cs_ratio()) > 1e-12) {
    throw std::invalid_argument("checkpoint was trained at cs ratio " +
                                std::to_string(c.sensing.cs_ratio()) + ", not " +
                                std::to_string(*cs_ratio));
  }
  refresh_quantized_views(c.model);
  return c;
}

struct ReconstructArgs {
  std::string model;
  std::optional<double> cs_ratio;
  std::string input;
  std::string output;
  std::string diff;
};

int run_reconstruct(const ReconstructArgs& a, const Globals& g) {
  const Checkpoint c = load_model(a.model, a.cs_ratio);
  const Tensor img = load_pgm(a.input);
  const ImageReconstruction r =
      reconstruct_image(c.model, c.sensing, img, patch_side(c.sensing), g.workers);
  save_pgm(a.output, r.image);
  if (!a.diff.empty()) save_pgm(a.diff, abs_difference(r.image, img));
  std::cout << std::fixed << std::setprecision(4) << "psnr_db " << psnr(r.image, img)
            << "\nbaseline_psnr_db " << psnr(r.baseline, img) << "\n";
  if (img.extent(0) >= kSsimWindow && img.extent(1) >= kSsimWindow) {
    std::cout << "ssim " << ssim(r.image, img) << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string csv;
  std::string diff_dir;
};

int run_eval(const EvalArgs& a, const Globals& g) {
  const Checkpoint c = load_model(a.model, std::nullopt);
  const std::size_t side = patch_side(c.sensing);
  const std::string bits = c.model.bits() ? std::to_string(*c.model.bits()) : "full";
  const std::string variant(variant_name(c.model.variant()));
  struct Row {
    std::string image;
    double psnr;
    double ssim;
  };
  std::vector<Row> rows;
  if (!a.diff_dir.empty()) fs::create_directories(a.diff_dir);
  for (const auto& f : pgm_files(a.data)) {
    const Tensor img = load_pgm(f);
    const ImageReconstruction r = reconstruct_image(c.model, c.sensing, img, side, g.workers);
    const bool with_ssim = img.extent(0) >= kSsimWindow && img.extent(1) >= kSsimWindow;
    rows.push_back({f.filename().string(), psnr(r.image, img),
                    with_ssim ? ssim(r.image, img) : std::nan("")});
    if (!a.diff_dir.empty()) {
      save_pgm(fs::path(a.diff_dir) / (f.stem().string() + "_diff.pgm"), abs_difference(r.image, img));
    }
  }
  double mp = 0.0, ms = 0.0;
  for (const Row& r : rows) {
    mp += r.psnr;
    ms += r.ssim;
  }
  mp /= static_cast<double>(rows.size());
  ms /= static_cast<double>(rows.size());

  std::ostringstream csv;
  csv << "image,cs_ratio,bits,variant,psnr_db,ssim\n" << std::setprecision(17);
  for (const Row& r : rows) {
    csv << r.image << ',' << c.sensing.cs_ratio() << ',' << bits << ',' << variant << ',' << r.psnr
        << ',' << r.ssim << '\n';
  }
  csv << "mean," << c.sensing.cs_ratio() << ',' << bits << ',' << variant << ',' << mp << ',' << ms
      << '\n';
  if (!a.csv.empty()) {
    std::ofstream os(a.csv);
    if (!os) throw std::runtime_error("cannot write " + a.csv);
    os << csv.str();
  }

  std::size_t name_w = 5;
  for (const Row& r : rows) name_w = std::max(name_w, r.image.size());
  std::cout << std::left << std::setw(static_cast<int>(name_w)) << "image" << std::right
            << std::setw(10) << "cs_ratio" << std::setw(6) << "bits" << std::setw(9) << "variant"
            << std::setw(11) << "psnr_db" << std::setw(9) << "ssim" << "\n";
  auto line = [&](const std::string& name, double p, double s) {
    std::cout << std::left << std::setw(static_cast<int>(name_w)) << name << std::right
              << std::setw(10) << std::setprecision(3) << std::fixed << c.sensing.cs_ratio()
              << std::setw(6) << bits << std::setw(9) << variant << std::setw(11)
              << std::setprecision(4) << p << std::setw(9) << s << "\n";
  };
  for (const Row& r : rows) line(r.image, r.psnr, r.ssim);
  line("mean", mp, ms);
  return 0;
}

void report_error(const Globals& g, const std::string& command, const std::string& what) {
  if (g.json) {
    std::cerr << nlohmann::json{{"error", what}, {"command", command}}.dump() << "\n";
  } else {
    std::cerr << "error: " << what << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal-averaged shrinkage: solver, unfolded networks and quantized training"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json, "Machine-readable error JSON on stderr");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for sensing, init and shuffling");
  app.add_option("--workers", g.workers, "Worker threads for batch evaluation")->check(CLI::PositiveNumber);

  ProxCheckArgs pc;
  auto* cmd_pc = app.add_subcommand("proxcheck", "Compare closed-form prox maps with a grid search");
  cmd_pc->add_option("--draws", pc.draws, "Random (penalty, parameter, input) draws");
  cmd_pc->add_option("--step", pc.step, "Grid step");
  cmd_pc->add_option("--tolerance", pc.tolerance, "Largest allowed deviation");

  PaisaArgs pa;
  auto* cmd_pa = app.add_subcommand("paisa", "Classical proximal-averaged solve of a measured image");
  cmd_pa->add_option("--cs-ratio", pa.cs_ratio, "Measurement ratio m/n")->check(CLI::Range(0.0, 1.0));
  cmd_pa->add_option("--iters", pa.iters, "Iterations")->check(CLI::PositiveNumber);
  cmd_pa->add_option("--penalties", pa.penalties, "Comma list of l1, mcp, scad");
  cmd_pa->add_option("--alphas", pa.alphas, "Comma list of mixture weights (default uniform)");
  cmd_pa->add_option("--lambda", pa.lambda, "Threshold for every penalty");
  cmd_pa->add_option("--gamma", pa.gamma, "MCP shape (> 1)");
  cmd_pa->add_option("--a", pa.a, "SCAD shape (> 2)");
  cmd_pa->add_option("--rho", pa.rho, "Gradient step size");
  cmd_pa->add_option("--patch", pa.patch, "Block size")->check(CLI::PositiveNumber);
  cmd_pa->add_option("--filters", pa.filters, "Identity transform width")->check(CLI::PositiveNumber);
  cmd_pa->add_option("--banks", pa.banks, "PAVT1 file with transform banks");
  cmd_pa->add_option("--trace", pa.trace, "Per-iteration CSV");
  cmd_pa->add_option("input", pa.input, "Input PGM")->required();
  cmd_pa->add_option("output", pa.output, "Output PGM")->required();

  TrainArgs ta;
  auto* cmd_tr = app.add_subcommand("train", "Quantization-aware training of PAN / PAN+");
  cmd_tr->add_option("--config", ta.config, "JSON config");
  cmd_tr->add_option("--data", ta.data, "Directory of PGM training images");
  cmd_tr->add_option("--synthetic", ta.synthetic, "Use N synthetic piecewise-smooth patches");
  cmd_tr->add_option("--variant", ta.variant, "pan or pan+");
  cmd_tr->add_option("--regs", ta.regs, "Number of regularizers (1, 2, 3)");
  cmd_tr->add_option("--bits", ta.bits, "1..8 or full");
  cmd_tr->add_option("--epochs", ta.epochs, "Epochs");
  cmd_tr->add_option("--batch-size", ta.batch_size, "Batch size");
  cmd_tr->add_option("--lr", ta.learning_rate, "Learning rate");
  cmd_tr->add_option("--layers", ta.layers, "Unfolded layers");
  cmd_tr->add_option("--filters", ta.filters, "Filters per bank");
  cmd_tr->add_option("--cs-ratio", ta.cs_ratio, "Measurement ratio m/n");
  cmd_tr->add_option("--patch", ta.patch, "Patch size");
  cmd_tr->add_option("--stride", ta.stride, "Patch extraction stride");
  cmd_tr->add_option("--out", ta.out, "Checkpoint directory")->required();
  cmd_tr->add_option("--log", ta.log, "JSONL log (default OUT/train_log.jsonl)");

  ReconstructArgs ra;
  auto* cmd_re = app.add_subcommand("reconstruct", "Measure and reconstruct one image");
  cmd_re->add_option("--model", ra.model, "Checkpoint directory")->required();
  cmd_re->add_option("--cs-ratio", ra.cs_ratio, "Must match the checkpoint");
  cmd_re->add_option("--diff", ra.diff, "Write |x_hat - x| as PGM");
  cmd_re->add_option("input", ra.input, "Ground-truth PGM")->required();
  cmd_re->add_option("output", ra.output, "Output PGM")->required();

  EvalArgs ea;
  auto* cmd_ev = app.add_subcommand("eval", "PSNR / SSIM over a directory of PGM images");
  cmd_ev->add_option("--model", ea.model, "Checkpoint directory")->required();
  cmd_ev->add_option("--data", ea.data, "Directory of PGM images")->required();
  cmd_ev->add_option("--csv", ea.csv, "CSV output path");
  cmd_ev->add_option("--diff-dir", ea.diff_dir, "Write difference images here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (g.json && e.get_exit_code() != 0) {
      report_error(g, "parse", e.what());
      return e.get_exit_code();
    }
    return app.exit(e);
  }

  std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*cmd_pc) return run_proxcheck(pc, g);
    if (*cmd_pa) return run_paisa_cmd(pa, g);
    if (*cmd_tr) return run_train(ta, g, seed_opt->count() > 0);
    if (*cmd_re) return run_reconstruct(ra, g);
    if (*cmd_ev) return run_eval(ea, g);
  } catch (const std::invalid_argument& e) {
    report_error(g, command, e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(g, command, e.what());
    return 1;
  }
  return 0;
}
