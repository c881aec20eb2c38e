#pragma once

#include <map>
#include <string>
#include <vector>

#include "drsan/stn.hpp"
#include "drsan/tensor.hpp"

namespace drsan {

// Per-column convolution stack: kernels[i] x kernels[i] with channels[i]
// outputs, relu after every layer, a 2x2 max-pool after each layer whose index
// appears in pools.
struct ColumnSpec {
  std::vector<int> kernels;
  std::vector<int> channels;
  std::vector<int> pools;
};

struct ModelConfig {
  int image_h = 64;
  int image_w = 64;
  int in_channels = 1;
  int width_mult = 1;
  int region_h = 0;  // 0 -> half the density-map side, floor 2
  int region_w = 0;
  int map_encode_dim = 512;
  int lstm_hidden = 512;
  int ctx_hidden = 256;
  bool use_context = true;
  bool context_flatten = false;  // encode flattened g instead of pooled g
  TransformMode mode = TransformMode::Full;
  double s_min = kDefaultScaleMin;

  // feature extractor: three columns, seven layers, three pools each
  std::vector<ColumnSpec> feature_columns() const;
  // refiner: three columns, five layers, no pooling
  std::vector<ColumnSpec> refine_columns() const;

  int map_h() const;       // density-map extents (1/8 input)
  int map_w() const;
  int eff_region_h() const;
  int eff_region_w() const;
  int feature_channels() const;  // channels of g after column concat
  int refine_in_channels() const;

  void validate() const;
};

// Named parameter registry; lexicographic name order fixes the update and
// serialization order everywhere.
struct ModelParams {
  ModelConfig cfg;
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void zero_grad();
  void set_requires_grad(bool b);
};

// Inventory of (name, shape) pairs implied by a config; parameters are created
// zero-filled.
ModelParams make_params(const ModelConfig& cfg);

struct RefinementState {
  Tensor m;  // [1,1,map_h,map_w]
  Tensor h;  // [1,hidden]
  Tensor c;  // [1,hidden]
  int i = 0;
  int budget = 0;
  std::vector<AffineTransform> trace;
};

// Three-column feature stack over the whole image -> g [1,Cg,H/8,W/8].
Tensor gfe_forward(const Tensor& image, const ModelParams& params);
// 1x1 convolution + relu -> first density estimate [1,1,H/8,W/8].
Tensor initial_map(const Tensor& g, const ModelParams& params);
// Pooled (or flattened) g through two fully-connected layers, reshaped to the
// region extents. Computed once per image and reused every iteration.
Tensor global_context(const Tensor& g, const ModelParams& params);

// One refinement iteration: encode the current map, step the LSTM, predict a
// transform, sample the attended region, run the refiner on (region, context),
// and scatter the residual back through the inverse transform.
void rsar_step(RefinementState& state, const Tensor& context,
               const ModelParams& params, TransformMode mode);

struct ForwardResult {
  Tensor m0;
  Tensor mn;
  std::vector<AffineTransform> trace;
};

ForwardResult drsan_forward(const Tensor& image, const ModelParams& params,
                            int n, TransformMode mode);

}  // namespace drsan
