#include "drsan/model.hpp"

#include <algorithm>

namespace drsan {

std::vector<ColumnSpec> ModelConfig::feature_columns() const {
  const int w = width_mult;
  const std::vector<int> ch = {8 * w, 16 * w, 16 * w, 16 * w, 16 * w, 8 * w, 8 * w};
  return {
      ColumnSpec{{9, 7, 7, 7, 5, 5, 5}, ch, {1, 3, 5}},
      ColumnSpec{{7, 5, 5, 5, 3, 3, 3}, ch, {1, 3, 5}},
      ColumnSpec{{5, 3, 3, 3, 3, 3, 3}, ch, {1, 3, 5}},
  };
}

std::vector<ColumnSpec> ModelConfig::refine_columns() const {
  const int w = width_mult;
  const std::vector<int> ch = {8 * w, 16 * w, 16 * w, 8 * w, 8 * w};
  return {
      ColumnSpec{{7, 5, 5, 3, 3}, ch, {}},
      ColumnSpec{{5, 3, 3, 3, 3}, ch, {}},
      ColumnSpec{{3, 3, 3, 3, 3}, ch, {}},
  };
}

int ModelConfig::map_h() const { return image_h / 8; }
int ModelConfig::map_w() const { return image_w / 8; }

int ModelConfig::eff_region_h() const {
  return region_h > 0 ? region_h : std::max(2, map_h() / 2);
}
int ModelConfig::eff_region_w() const {
  return region_w > 0 ? region_w : std::max(2, map_w() / 2);
}

int ModelConfig::feature_channels() const {
  int total = 0;
  for (const ColumnSpec& col : feature_columns()) total += col.channels.back();
  return total;
}

int ModelConfig::refine_in_channels() const { return use_context ? 2 : 1; }

void ModelConfig::validate() const {
  if (image_h <= 0 || image_w <= 0 || image_h % 8 != 0 || image_w % 8 != 0)
    throw ShapeError("model: image extents " + std::to_string(image_h) + "x" +
                     std::to_string(image_w) + " must be positive multiples of 8");
  if (width_mult < 1) throw ConfigError("model: width_mult must be >= 1");
  if (eff_region_h() < 2 || eff_region_w() < 2)
    throw ConfigError("model: region extents must be >= 2");
  if (map_encode_dim < 1 || lstm_hidden < 1 || ctx_hidden < 1)
    throw ConfigError("model: layer widths must be positive");
  if (!(s_min > 0 && s_min <= 1)) throw ConfigError("model: s_min must be in (0,1]");
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("ModelParams: no parameter named '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("ModelParams: no parameter named '" + name + "'");
  return it->second;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors) t.zero_grad();
}

void ModelParams::set_requires_grad(bool b) {
  for (auto& [name, t] : tensors) t.set_requires_grad(b);
}

namespace {

void add_column_params(ModelParams& p, const std::string& prefix,
                       const ColumnSpec& col, int in_channels) {
  int c_in = in_channels;
  for (size_t l = 0; l < col.kernels.size(); ++l) {
    const int k = col.kernels[l];
    const int c_out = col.channels[l];
    const std::string base = prefix + ".l" + std::to_string(l);
    p.tensors[base + ".w"] = Tensor::zeros({c_out, c_in, k, k}, true);
    p.tensors[base + ".b"] = Tensor::zeros({c_out}, true);
    c_in = c_out;
  }
}

}  // namespace

ModelParams make_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;

  const auto gfe = cfg.feature_columns();
  for (size_t c = 0; c < gfe.size(); ++c)
    add_column_params(p, "gfe.c" + std::to_string(c), gfe[c], cfg.in_channels);

  const int cg = cfg.feature_channels();
  p.tensors["head.w"] = Tensor::zeros({1, cg, 1, 1}, true);
  p.tensors["head.b"] = Tensor::zeros({1}, true);

  const int map_elems = cfg.map_h() * cfg.map_w();
  p.tensors["enc.w"] = Tensor::zeros({map_elems, cfg.map_encode_dim}, true);
  p.tensors["enc.b"] = Tensor::zeros({cfg.map_encode_dim}, true);

  const int d = cfg.map_encode_dim, hdim = cfg.lstm_hidden;
  for (const char* gate : {"i", "f", "o", "g"}) {
    p.tensors[std::string("lstm.") + gate + ".wx"] = Tensor::zeros({d, hdim}, true);
    p.tensors[std::string("lstm.") + gate + ".wh"] = Tensor::zeros({hdim, hdim}, true);
    p.tensors[std::string("lstm.") + gate + ".b"] = Tensor::zeros({hdim}, true);
  }

  // six outputs in every mode; structured modes read the first five
  p.tensors["thead.w"] = Tensor::zeros({hdim, 6}, true);
  p.tensors["thead.b"] = Tensor::zeros({6}, true);

  const int rh = cfg.eff_region_h(), rw = cfg.eff_region_w();
  if (cfg.use_context) {
    const int ctx_in = cfg.context_flatten ? cg * map_elems : cg;
    p.tensors["ctx.fc1.w"] = Tensor::zeros({ctx_in, cfg.ctx_hidden}, true);
    p.tensors["ctx.fc1.b"] = Tensor::zeros({cfg.ctx_hidden}, true);
    p.tensors["ctx.fc2.w"] = Tensor::zeros({cfg.ctx_hidden, rh * rw}, true);
    p.tensors["ctx.fc2.b"] = Tensor::zeros({rh * rw}, true);
  }

  const auto lrn = cfg.refine_columns();
  for (size_t c = 0; c < lrn.size(); ++c)
    add_column_params(p, "lrn.c" + std::to_string(c), lrn[c],
                      cfg.refine_in_channels());
  int lrn_out = 0;
  for (const ColumnSpec& col : lrn) lrn_out += col.channels.back();
  p.tensors["lrn.fuse.w"] = Tensor::zeros({1, lrn_out, 1, 1}, true);
  p.tensors["lrn.fuse.b"] = Tensor::zeros({1}, true);

  return p;
}

namespace {

Tensor run_column(const Tensor& x, const ModelParams& p,
                  const std::string& prefix, const ColumnSpec& col) {
  Tensor cur = x;
  for (size_t l = 0; l < col.kernels.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    const int k = col.kernels[l];
    cur = relu(conv2d(cur, p.at(base + ".w"), p.at(base + ".b"), 1, (k - 1) / 2));
    if (std::find(col.pools.begin(), col.pools.end(), static_cast<int>(l)) !=
        col.pools.end())
      cur = maxpool2(cur);
  }
  return cur;
}

}  // namespace

Tensor gfe_forward(const Tensor& image, const ModelParams& params) {
  const ModelConfig& cfg = params.cfg;
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != cfg.in_channels)
    throw ShapeError("gfe_forward: image must be [1," +
                     std::to_string(cfg.in_channels) + ",H,W], got " +
                     shape_str(image.shape()));
  if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0)
    throw ShapeError("gfe_forward: spatial extents " +
                     std::to_string(image.dim(2)) + "x" +
                     std::to_string(image.dim(3)) + " must be divisible by 8");
  const auto cols = cfg.feature_columns();
  std::vector<Tensor> outs;
  outs.reserve(cols.size());
  for (size_t c = 0; c < cols.size(); ++c)
    outs.push_back(run_column(image, params, "gfe.c" + std::to_string(c), cols[c]));
  return concat_channels(outs);
}

Tensor initial_map(const Tensor& g, const ModelParams& params) {
  return relu(conv2d(g, params.at("head.w"), params.at("head.b"), 1, 0));
}

Tensor global_context(const Tensor& g, const ModelParams& params) {
  const ModelConfig& cfg = params.cfg;
  if (!cfg.use_context)
    throw std::logic_error("global_context: model built without context");
  Tensor enc;
  if (cfg.context_flatten) {
    enc = reshape(g, {1, static_cast<int>(g.numel())});
  } else {
    enc = spatial_mean(g);
  }
  Tensor hdn = relu(fully_connected(enc, params.at("ctx.fc1.w"), params.at("ctx.fc1.b")));
  Tensor flat = fully_connected(hdn, params.at("ctx.fc2.w"), params.at("ctx.fc2.b"));
  return reshape(flat, {1, 1, cfg.eff_region_h(), cfg.eff_region_w()});
}

void rsar_step(RefinementState& state, const Tensor& context,
               const ModelParams& params, TransformMode mode) {
  const ModelConfig& cfg = params.cfg;
  if (state.i >= state.budget)
    throw std::logic_error("rsar_step: refinement budget of " +
                           std::to_string(state.budget) + " steps exhausted");
  const int mh = cfg.map_h(), mw = cfg.map_w();
  const int rh = cfg.eff_region_h(), rw = cfg.eff_region_w();

  // encode the current map and advance the recurrent state
  Tensor enc = fully_connected(reshape(state.m, {1, mh * mw}), params.at("enc.w"),
                               params.at("enc.b"));
  LstmParams lp{params.at("lstm.i.wx"), params.at("lstm.i.wh"), params.at("lstm.i.b"),
                params.at("lstm.f.wx"), params.at("lstm.f.wh"), params.at("lstm.f.b"),
                params.at("lstm.o.wx"), params.at("lstm.o.wh"), params.at("lstm.o.b"),
                params.at("lstm.g.wx"), params.at("lstm.g.wh"), params.at("lstm.g.b")};
  auto [h, c] = lstm_cell(enc, state.h, state.c, lp);
  state.h = h;
  state.c = c;

  // predict the attended region
  Tensor raw = fully_connected(h, params.at("thead.w"), params.at("thead.b"));
  AffineTransform t = compose_transform(raw, mode, cfg.s_min);
  Tensor region = bilinear_sample(reshape(state.m, {1, mh, mw}),
                                  affine_grid(t, rh, rw));

  // refine it
  Tensor refine_in = reshape(region, {1, 1, rh, rw});
  if (cfg.use_context) refine_in = concat_channels({refine_in, context});
  const auto cols = cfg.refine_columns();
  std::vector<Tensor> outs;
  outs.reserve(cols.size());
  for (size_t ci = 0; ci < cols.size(); ++ci)
    outs.push_back(
        run_column(refine_in, params, "lrn.c" + std::to_string(ci), cols[ci]));
  Tensor residual = conv2d(concat_channels(outs), params.at("lrn.fuse.w"),
                           params.at("lrn.fuse.b"), 1, 0);

  // scatter back and update; the clamp keeps density maps non-negative
  Tensor scattered = inverse_scatter(reshape(residual, {1, rh, rw}), t, mh, mw);
  state.m = relu(add(state.m, reshape(scattered, {1, 1, mh, mw})));
  state.i += 1;
  state.trace.push_back(std::move(t));
}

ForwardResult drsan_forward(const Tensor& image, const ModelParams& params,
                            int n, TransformMode mode) {
  if (n < 0) throw std::invalid_argument("drsan_forward: n must be >= 0");
  const ModelConfig& cfg = params.cfg;
  Tensor g = gfe_forward(image, params);
  Tensor m0 = initial_map(g, params);

  RefinementState state;
  state.m = m0;
  state.h = Tensor::zeros({1, cfg.lstm_hidden});
  state.c = Tensor::zeros({1, cfg.lstm_hidden});
  state.budget = n;

  Tensor context;
  if (n > 0 && cfg.use_context) context = global_context(g, params);
  for (int i = 0; i < n; ++i) rsar_step(state, context, params, mode);

  return ForwardResult{m0, state.m, std::move(state.trace)};
}

}  // namespace drsan
