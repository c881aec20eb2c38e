// Command-line front end: dataset generation, training, evaluation, single
// image prediction, gradient checking, and the ablation grid.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "drsan/checkpoint.hpp"
#include "drsan/config.hpp"
#include "drsan/eval.hpp"
#include "drsan/gradcheck.hpp"
#include "drsan/train.hpp"

namespace fs = std::filesystem;
using namespace drsan;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<std::string> mode;
  std::optional<std::string> context;
  std::optional<int> iters;
  std::optional<std::string> out;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "config file (key = value lines)");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--n", f.n, "refinement steps");
  cmd->add_option("--mode", f.mode, "transform constraint: t|ts|tsr|raw");
  cmd->add_option("--context", f.context, "global context: on|off");
  cmd->add_option("--iters", f.iters, "training iterations");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--dataset", f.dataset, "annotations.json path");
  cmd->add_option("--checkpoint", f.checkpoint, "model checkpoint path");
}

AppConfig resolve(const Flags& f) {
  AppConfig cfg;
  if (!f.config.empty()) apply_config_file(cfg, f.config);
  if (f.seed) apply_key(cfg, "seed", std::to_string(*f.seed));
  if (f.n) apply_key(cfg, "n", std::to_string(*f.n));
  if (f.mode) apply_key(cfg, "mode", *f.mode);
  if (f.context) apply_key(cfg, "context", *f.context);
  if (f.iters) apply_key(cfg, "iterations", std::to_string(*f.iters));
  if (f.out) apply_key(cfg, "out", *f.out);
  if (f.dataset) apply_key(cfg, "dataset", *f.dataset);
  if (f.checkpoint) apply_key(cfg, "checkpoint", *f.checkpoint);
  return cfg;
}

int cmd_gen_data(const Flags& f) {
  AppConfig cfg = resolve(f);
  const std::vector<Sample> samples = gen_synthetic(cfg.scene, cfg.scene_images);
  save_dataset(samples, cfg.train.out);
  std::printf("wrote %zu images to %s\n", samples.size(), cfg.train.out.c_str());
  return 0;
}

int cmd_train(const Flags& f) {
  AppConfig cfg = resolve(f);
  TrainResult result = train(cfg.train);
  std::printf("trained %d iterations, checkpoint at %s/model.ckpt\n",
              result.iterations, cfg.train.out.c_str());
  return 0;
}

std::vector<RoiMask> load_rois(const AppConfig& cfg,
                               const std::vector<Sample>& samples,
                               const ModelConfig& mc) {
  std::vector<RoiMask> rois;
  for (const Sample& s : samples) {
    const fs::path p = fs::path(cfg.roi_dir) / (s.ann.image_id + ".pgm");
    RoiMask m;
    if (fs::exists(p)) {
      const Image img = read_pgm(p.string());
      m.h = img.h;
      m.w = img.w;
      m.v.resize(img.v.size());
      for (size_t i = 0; i < img.v.size(); ++i) m.v[i] = img.v[i] > 0 ? 1.0 : 0.0;
    } else {
      m.h = mc.map_h();
      m.w = mc.map_w();
      m.v.assign(static_cast<size_t>(m.h) * m.w, 1.0);
    }
    rois.push_back(std::move(m));
  }
  return rois;
}

int cmd_eval(const Flags& f) {
  AppConfig cfg = resolve(f);
  if (cfg.checkpoint.empty()) throw ConfigError("eval: no checkpoint configured");
  if (cfg.train.dataset.empty()) throw ConfigError("eval: no dataset configured");
  const std::vector<Sample> samples = load_dataset(cfg.train.dataset);
  const ModelConfig mc = cfg.train.model();
  const ModelParams params = load_checkpoint(cfg.checkpoint, mc);

  EvalReport report;
  if (!cfg.roi_dir.empty()) {
    const std::vector<RoiMask> rois = load_rois(cfg, samples, mc);
    report = evaluate(params, samples, cfg.train.n, cfg.train.mode,
                      cfg.train.sigma, &rois);
  } else {
    report = evaluate(params, samples, cfg.train.n, cfg.train.mode,
                      cfg.train.sigma);
  }
  fs::create_directories(cfg.train.out);
  std::ofstream((fs::path(cfg.train.out) / "report.json").string())
      << report_json(report);
  const std::string table = report_table(report);
  std::ofstream((fs::path(cfg.train.out) / "report.txt").string()) << table;
  std::cout << table;
  return 0;
}

int cmd_predict(const Flags& f) {
  AppConfig cfg = resolve(f);
  if (cfg.checkpoint.empty()) throw ConfigError("predict: no checkpoint configured");
  if (cfg.train.dataset.empty()) throw ConfigError("predict: no dataset configured");
  const std::vector<Sample> samples = load_dataset(cfg.train.dataset);
  const ModelConfig mc = cfg.train.model();
  const ModelParams params = load_checkpoint(cfg.checkpoint, mc);
  fs::create_directories(cfg.train.out);

  for (const Sample& s : samples) {
    std::vector<real> px(s.image.v.begin(), s.image.v.end());
    const Tensor image = Tensor::from({1, 1, s.image.h, s.image.w}, std::move(px));
    const ForwardResult fwd = drsan_forward(image, params, cfg.train.n, cfg.train.mode);

    const int mh = mc.map_h(), mw = mc.map_w();
    const real* pm = fwd.mn.data();
    double count = 0;
    for (int i = 0; i < mh * mw; ++i) count += static_cast<double>(pm[i]);

    // full-precision CSV is the canonical output
    const fs::path csv = fs::path(cfg.train.out) / (s.ann.image_id + ".csv");
    std::ofstream cf(csv.string());
    for (int y = 0; y < mh; ++y) {
      for (int x = 0; x < mw; ++x) {
        char num[48];
        std::snprintf(num, sizeof(num), "%.17g", static_cast<double>(pm[y * mw + x]));
        cf << num << (x + 1 == mw ? "\n" : ",");
      }
    }

    // normalized heat rendering for inspection
    Image heat;
    heat.h = mh;
    heat.w = mw;
    heat.v.resize(static_cast<size_t>(mh) * mw);
    double peak = 0;
    for (int i = 0; i < mh * mw; ++i)
      peak = std::max(peak, static_cast<double>(pm[i]));
    for (int i = 0; i < mh * mw; ++i)
      heat.v[static_cast<size_t>(i)] =
          peak > 0 ? static_cast<double>(pm[i]) / peak : 0.0;
    write_pgm(heat, (fs::path(cfg.train.out) / (s.ann.image_id + ".pgm")).string());

    std::printf("%s %.6f\n", s.ann.image_id.c_str(), count);
  }
  return 0;
}

int cmd_gradcheck(const Flags& f) {
  AppConfig cfg = resolve(f);
  const std::vector<FdResult> results = run_gradient_suite(cfg.train.seed);
  for (const FdResult& r : results)
    std::printf("%-18s max rel err %.3e over %d coords (tol %.0e) %s\n",
                r.name.c_str(), r.max_rel_err, r.checked, r.tolerance,
                r.pass() ? "ok" : "FAIL");
  return suite_passed(results) ? 0 : 1;
}

int cmd_ablate(const Flags& f) {
  AppConfig cfg = resolve(f);
  std::vector<Sample> samples;
  if (!cfg.train.dataset.empty()) {
    samples = load_dataset(cfg.train.dataset);
  } else {
    samples = gen_synthetic(cfg.scene, cfg.scene_images);
  }

  struct Row {
    std::string variant;
    int n;
    double mae, mse;
  };
  std::vector<Row> rows;
  auto run_one = [&](TransformMode mode, int n, bool context) {
    TrainConfig t = cfg.train;
    t.mode = mode;
    t.n = n;
    t.use_context = context;
    const TrainResult r = train_on(t, samples, nullptr);
    const EvalReport rep = evaluate(r.params, samples, n, mode, t.sigma);
    return std::pair<double, double>{rep.mae, rep.mse};
  };

  for (TransformMode mode : {TransformMode::Translation,
                             TransformMode::TranslationScale, TransformMode::Full}) {
    for (int n : {0, 10, 20, 30, 40}) {
      auto [mae, mse] = run_one(mode, n, cfg.train.use_context);
      rows.push_back({mode_name(mode), n, mae, mse});
      std::printf("done: mode %-3s n %-2d mae %.4f\n", mode_name(mode), n, mae);
    }
  }
  for (bool context : {true, false}) {
    auto [mae, mse] = run_one(TransformMode::Full, cfg.train.n, context);
    rows.push_back({context ? "context-on" : "context-off", cfg.train.n, mae, mse});
    std::printf("done: %s mae %.4f\n", context ? "context-on" : "context-off", mae);
  }

  std::string table;
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %4s %12s %12s\n", "variant", "n",
                "mae", "mse");
  table += line;
  for (const Row& r : rows) {
    std::snprintf(line, sizeof(line), "%-12s %4d %12.4f %12.4f\n",
                  r.variant.c_str(), r.n, r.mae, r.mse);
    table += line;
  }
  std::cout << table;
  fs::create_directories(cfg.train.out);
  std::ofstream((fs::path(cfg.train.out) / "ablation.txt").string()) << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowd counting with recurrent spatial-aware refinement"};
  app.require_subcommand(1);

  Flags f;
  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  auto* tr = app.add_subcommand("train", "train a model");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* pr = app.add_subcommand("predict", "write density maps for a dataset");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  auto* ab = app.add_subcommand("ablate", "transform/context/steps ablation grid");
  for (CLI::App* cmd : {gen, tr, ev, pr, gc, ab}) add_common_flags(cmd, f);

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(f);
    if (tr->parsed()) return cmd_train(f);
    if (ev->parsed()) return cmd_eval(f);
    if (pr->parsed()) return cmd_predict(f);
    if (gc->parsed()) return cmd_gradcheck(f);
    if (ab->parsed()) return cmd_ablate(f);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
