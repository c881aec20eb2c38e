#include "drsan/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "drsan/checkpoint.hpp"

namespace fs = std::filesystem;

namespace drsan {

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.image_h = image_h;
  m.image_w = image_w;
  m.width_mult = width_mult;
  m.region_h = region_h;
  m.region_w = region_w;
  m.map_encode_dim = map_encode_dim;
  m.lstm_hidden = lstm_hidden;
  m.ctx_hidden = ctx_hidden;
  m.use_context = use_context;
  m.context_flatten = context_flatten;
  m.mode = mode;
  m.s_min = s_min;
  return m;
}

Tensor loss(const Tensor& m0, const Tensor& mn, const Tensor& target) {
  if (m0.shape() != target.shape() || mn.shape() != target.shape())
    throw ShapeError("loss: map shapes disagree: " + shape_str(m0.shape()) +
                     ", " + shape_str(mn.shape()) + ", " +
                     shape_str(target.shape()));
  const Tensor d0 = sub(m0, target);
  const Tensor dn = sub(mn, target);
  return add(sum_all(mul(d0, d0)), sum_all(mul(dn, dn)));
}

namespace {

double ipow(double base, int e) {
  double result = 1.0, acc = base;
  for (; e > 0; e >>= 1) {
    if (e & 1) result *= acc;
    acc *= acc;
  }
  return result;
}

}  // namespace

double lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0) throw std::invalid_argument("lr_at: iter must be >= 0");
  return cfg.lr0 * ipow(cfg.lr_decay, iter / cfg.lr_decay_every);
}

OptimizerState make_optimizer(const ModelParams& params) {
  OptimizerState opt;
  for (const auto& [name, t] : params.tensors) {
    opt.names.push_back(name);
    opt.m.emplace_back(t.numel(), real(0));
    opt.v.emplace_back(t.numel(), real(0));
  }
  return opt;
}

void adam_step(ModelParams& params, OptimizerState& opt, double lr,
               const TrainConfig& cfg) {
  opt.step += 1;
  const real b1 = static_cast<real>(cfg.beta1);
  const real b2 = static_cast<real>(cfg.beta2);
  const real eps = static_cast<real>(cfg.adam_eps);
  const real corr1 = real(1) - static_cast<real>(std::pow(cfg.beta1, static_cast<double>(opt.step)));
  const real corr2 = real(1) - static_cast<real>(std::pow(cfg.beta2, static_cast<double>(opt.step)));

  real clip_scale = 1;
  if (cfg.grad_clip > 0) {
    double norm_sq = 0;
    for (const std::string& name : opt.names) {
      const Tensor& t = params.at(name);
      for (real g : t.grad()) norm_sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > cfg.grad_clip)
      clip_scale = static_cast<real>(cfg.grad_clip / norm);
  }

  for (size_t pi = 0; pi < opt.names.size(); ++pi) {
    Tensor& t = params.at(opt.names[pi]);
    t.impl->ensure_grad();
    std::vector<real>& m = opt.m[pi];
    std::vector<real>& v = opt.v[pi];
    real* p = t.data();
    const real* g = t.impl->grad.data();
    for (size_t i = 0; i < m.size(); ++i) {
      const real gi = g[i] * clip_scale;
      if (!std::isfinite(gi))
        throw DivergenceError("adam_step: non-finite gradient in '" +
                              opt.names[pi] + "' at element " +
                              std::to_string(i));
      m[i] = b1 * m[i] + (real(1) - b1) * gi;
      v[i] = b2 * v[i] + (real(1) - b2) * gi * gi;
      const real mhat = m[i] / corr1;
      const real vhat = v[i] / corr2;
      p[i] -= static_cast<real>(lr) * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

ModelParams init_params(std::uint64_t seed, const ModelConfig& cfg,
                        double sigma, double trunc) {
  ModelParams params = make_params(cfg);
  SplitMix64 rng(seed);
  for (auto& [name, t] : params.tensors) {
    const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (name == "thead.w" || name == "thead.b" || is_bias) continue;
    real* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i)
      p[i] = static_cast<real>(rng.truncated_normal(sigma, trunc));
  }
  // start iteration 1 at a near-identity glimpse: full scale (sigmoid(3) of
  // the squash maps close to the top of [s_min,1]), zero angle and shift.
  Tensor& tb = params.at("thead.b");
  if (cfg.mode == TransformMode::Raw) {
    const real id[6] = {1, 0, 0, 0, 1, 0};
    std::copy(id, id + 6, tb.data());
  } else {
    tb.data()[0] = 3;
    tb.data()[1] = 3;
  }
  return params;
}

TrainResult train_on(const TrainConfig& cfg, const std::vector<Sample>& samples,
                     std::ostream* log) {
  if (samples.empty()) throw std::invalid_argument("train: dataset is empty");
  if (cfg.iterations < 1)
    throw std::invalid_argument("train: iterations must be >= 1");
  const ModelConfig mc = cfg.model();
  mc.validate();

  // precompute inputs and pooled ground truth
  std::vector<Tensor> images, targets;
  std::vector<double> gt_counts;
  for (const Sample& s : samples) {
    if (s.image.h != cfg.image_h || s.image.w != cfg.image_w)
      throw ShapeError("train: image '" + s.ann.image_id + "' is " +
                       std::to_string(s.image.w) + "x" +
                       std::to_string(s.image.h) + ", config wants " +
                       std::to_string(cfg.image_w) + "x" +
                       std::to_string(cfg.image_h));
    std::vector<real> px(s.image.v.begin(), s.image.v.end());
    images.push_back(Tensor::from({1, 1, cfg.image_h, cfg.image_w}, std::move(px)));
    const DensityMap d = downsample_sum(generate_density(s.ann, cfg.sigma), 8);
    std::vector<real> dv(d.v.begin(), d.v.end());
    targets.push_back(Tensor::from({1, 1, d.h, d.w}, std::move(dv)));
    gt_counts.push_back(sum_count(d));
  }

  TrainResult result;
  result.params = init_params(cfg.seed, mc, cfg.init_sigma, cfg.init_trunc);
  OptimizerState opt = make_optimizer(result.params);

  const int n_samples = static_cast<int>(samples.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    const int si = it % n_samples;
    const double lr = lr_at(it, cfg);

    double loss_val, mae0, maen;
    {
      Tape tape;
      ForwardResult fwd = drsan_forward(images[static_cast<size_t>(si)],
                                        result.params, cfg.n, cfg.mode);
      Tensor l = loss(fwd.m0, fwd.mn, targets[static_cast<size_t>(si)]);
      loss_val = static_cast<double>(l.item());
      if (!std::isfinite(loss_val))
        throw DivergenceError("train: non-finite loss at iteration " +
                              std::to_string(it + 1));
      double c0 = 0, cn = 0;
      for (real v : fwd.m0.values()) c0 += static_cast<double>(v);
      for (real v : fwd.mn.values()) cn += static_cast<double>(v);
      const double gt = gt_counts[static_cast<size_t>(si)];
      mae0 = std::fabs(c0 - gt);
      maen = std::fabs(cn - gt);
      result.params.zero_grad();
      tape.backward(l);
    }
    adam_step(result.params, opt, lr, cfg);

    if (log && ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations)) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d %.9e %.9e %.9e %.9e\n", it + 1,
                    loss_val, mae0, maen, lr);
      (*log) << line;
      result.logged_loss.push_back(loss_val);
    }
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 &&
        it + 1 != cfg.iterations) {
      fs::create_directories(cfg.out);
      save_checkpoint(result.params,
                      (fs::path(cfg.out) / ("checkpoint_" + std::to_string(it + 1) +
                                            ".ckpt")).string());
    }
    result.iterations = it + 1;
  }
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("train: no dataset configured");
  const std::vector<Sample> samples = load_dataset(cfg.dataset);
  fs::create_directories(cfg.out);
  std::ofstream log((fs::path(cfg.out) / "train.log").string());
  if (!log) throw std::runtime_error("train: cannot open log under " + cfg.out);
  TrainResult result = train_on(cfg, samples, &log);
  save_checkpoint(result.params, (fs::path(cfg.out) / "model.ckpt").string());
  return result;
}

}  // namespace drsan
