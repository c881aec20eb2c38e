#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "drsan/data.hpp"
#include "drsan/model.hpp"

namespace drsan {

struct TrainConfig {
  // optimization
  double lr0 = 1e-4;
  double lr_decay = 0.98;
  int lr_decay_every = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int iterations = 2000;
  double grad_clip = 0.0;  // global-norm clip, 0 = off
  std::uint64_t seed = 1;

  // initialization
  double init_sigma = 0.01;
  double init_trunc = 2.0;  // reject beyond this many sigmas

  // model
  int n = 4;
  TransformMode mode = TransformMode::Full;
  bool use_context = true;
  bool context_flatten = false;
  int image_h = 64;
  int image_w = 64;
  int width_mult = 1;
  int region_h = 0;
  int region_w = 0;
  int map_encode_dim = 512;
  int lstm_hidden = 512;
  int ctx_hidden = 256;
  double s_min = kDefaultScaleMin;

  // data
  double sigma = 4.0;  // density kernel, pixels at scale 1

  // logging / io
  int log_every = 10;
  int checkpoint_every = 0;  // 0 = only at the end
  std::string dataset;       // annotations.json path
  std::string out = "out";

  ModelConfig model() const;
};

// Sum of squared differences of both supervised maps against the target.
Tensor loss(const Tensor& m0, const Tensor& mn, const Tensor& target);

// lr0 * decay^(iter / decay_every), iter counted from zero.
double lr_at(int iter, const TrainConfig& cfg);

struct OptimizerState {
  // first/second moment accumulators, keyed and iterated by parameter name
  std::vector<std::string> names;
  std::vector<std::vector<real>> m;
  std::vector<std::vector<real>> v;
  std::int64_t step = 0;
};

OptimizerState make_optimizer(const ModelParams& params);

// Bias-corrected Adam over all parameters in fixed (lexicographic) order.
// Throws DivergenceError naming the parameter if a gradient is non-finite.
void adam_step(ModelParams& params, OptimizerState& opt, double lr,
               const TrainConfig& cfg);

// Truncated-normal weights (sigma, cutoff from cfg), zero biases, except the
// transform head: zero weights with a bias that starts iteration 1 at a
// near-identity full-map glimpse.
ModelParams init_params(std::uint64_t seed, const ModelConfig& cfg,
                        double sigma = 0.01, double trunc = 2.0);

struct TrainResult {
  ModelParams params;
  std::vector<double> logged_loss;  // one entry per logged line
  int iterations = 0;
};

// Core loop over in-memory samples; writes `iter loss mae0 maen lr` lines to
// `log` every cfg.log_every iterations.
TrainResult train_on(const TrainConfig& cfg, const std::vector<Sample>& samples,
                     std::ostream* log);

// Loads cfg.dataset, trains, writes checkpoint + train.log under cfg.out.
TrainResult train(const TrainConfig& cfg);

}  // namespace drsan
