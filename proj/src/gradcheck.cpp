#include "drsan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "drsan/model.hpp"
#include "drsan/stn.hpp"
#include "drsan/train.hpp"

namespace drsan {

FdResult fd_check(const std::string& name,
                  const std::function<Tensor()>& make_loss,
                  std::vector<Tensor> leaves, double tolerance,
                  SplitMix64& rng, int max_coords_per_leaf, double step,
                  double floor) {
  FdResult res;
  res.name = name;
  res.tolerance = tolerance;

  for (Tensor& leaf : leaves) leaf.zero_grad();
  double loss_mag;
  {
    Tape tape;
    Tensor l = make_loss();
    loss_mag = std::fabs(static_cast<double>(l.item()));
    tape.backward(l);
  }
  std::vector<std::vector<real>> grads;
  grads.reserve(leaves.size());
  for (const Tensor& leaf : leaves) grads.push_back(leaf.grad());

  // central differences cancel ~eps*|loss| of precision; derivatives below
  // this scale can only be compared absolutely
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, loss_mag) / (2.0 * step);
  const double floor_eff = std::max(floor, noise);

  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const std::int64_t n = leaf.numel();
    std::vector<std::int64_t> coords;
    if (n <= max_coords_per_leaf) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_leaf; ++i)
        coords.push_back(static_cast<std::int64_t>(rng.uniform_int(static_cast<int>(n))));
    }
    for (std::int64_t ci : coords) {
      real* p = leaf.data() + ci;
      const real saved = *p;
      auto probe = [&](double h) {
        *p = saved + static_cast<real>(h);
        const double lp = static_cast<double>(make_loss().item());
        *p = saved - static_cast<real>(h);
        const double lm = static_cast<double>(make_loss().item());
        *p = saved;
        return (lp - lm) / (2 * h);
      };
      const double fd = probe(step);
      const double an = static_cast<double>(grads[li][static_cast<size_t>(ci)]);
      const double scale = std::max(std::fabs(fd), std::fabs(an));
      ++res.checked;
      if (scale < floor_eff) {
        // negligible on both sides; require absolute agreement instead
        if (std::fabs(fd - an) > floor_eff)
          res.max_rel_err = std::max(res.max_rel_err, 1.0);
        ++res.skipped;
        continue;
      }
      if (std::fabs(fd - an) / scale > tolerance) {
        // the graph is piecewise smooth (relu, pooling argmax, bilinear cell
        // boundaries); a probe that straddles a kink disagrees with itself at
        // half step and proves nothing about the recorded gradient
        const double fd_half = probe(step / 2);
        if (std::fabs(fd - fd_half) > 0.05 * scale + 0.5 * floor_eff) {
          ++res.nonsmooth;
          continue;
        }
        if (std::getenv("DRSAN_FD_DEBUG"))
          std::fprintf(stderr, "FDDBG %s leaf %zu coord %lld fd %.9e fd2 %.9e an %.9e\n",
                       name.c_str(), li, static_cast<long long>(ci), fd, fd_half, an);
      }
      res.max_rel_err = std::max(res.max_rel_err, std::fabs(fd - an) / scale);
    }
  }
  return res;
}

namespace {

Tensor random_tensor(Shape s, SplitMix64& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  std::vector<real> v(static_cast<size_t>(shape_numel(s)));
  for (real& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return Tensor::from(std::move(s), std::move(v), requires_grad);
}

// fixed random weighting so the probe loss exercises every output element
Tensor weighted_sum(const Tensor& out, SplitMix64& rng) {
  std::vector<real> w(static_cast<size_t>(out.numel()));
  for (real& x : w) x = static_cast<real>(rng.uniform(-1.0, 1.0));
  Tensor wt = Tensor::from(out.shape(), std::move(w));
  return sum_all(mul(out, wt));
}

constexpr double kPrimTol = 1e-5;

FdResult check_conv(SplitMix64& rng) {
  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  // the probe weights must be identical on every call
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(conv2d(x, w, b, 1, 1), r);
  };
  return fd_check("conv2d", loss, {x, w, b}, kPrimTol, rng);
}

FdResult check_conv_strided(SplitMix64& rng) {
  Tensor x = random_tensor({1, 2, 7, 7}, rng);
  Tensor w = random_tensor({2, 2, 3, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(conv2d(x, w, b, 2, 1), r);
  };
  return fd_check("conv2d_stride2", loss, {x, w, b}, kPrimTol, rng);
}

FdResult check_maxpool(SplitMix64& rng) {
  // well-separated values keep the argmax stable under the probe step
  Tensor x = random_tensor({1, 2, 6, 6}, rng);
  {
    std::vector<real>& v = x.impl->v;
    std::vector<int> order(v.size());
    for (size_t i = 0; i < v.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = 0; i < v.size(); ++i) v[i] += real(0.001) * order[i];
  }
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(maxpool2(x), r);
  };
  return fd_check("maxpool2", loss, {x}, kPrimTol, rng);
}

FdResult check_fc(SplitMix64& rng) {
  Tensor x = random_tensor({3, 5}, rng);
  Tensor w = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(fully_connected(x, w, b), r);
  };
  return fd_check("fully_connected", loss, {x, w, b}, kPrimTol, rng);
}

FdResult check_activations(SplitMix64& rng) {
  // keep relu inputs away from the kink
  Tensor x = random_tensor({4, 5}, rng);
  for (real& v : x.impl->v)
    if (std::fabs(static_cast<double>(v)) < 1e-3) v += real(0.5);
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    Tensor y = add(relu(x), add(sigmoid(x), tanh(add(sin(x), cos(x)))));
    return weighted_sum(y, r);
  };
  return fd_check("activations", loss, {x}, kPrimTol, rng);
}

FdResult check_lstm(SplitMix64& rng) {
  const int d = 5, hdim = 4, n = 2;
  Tensor x = random_tensor({n, d}, rng);
  Tensor h0 = random_tensor({n, hdim}, rng);
  Tensor c0 = random_tensor({n, hdim}, rng);
  LstmParams p;
  auto mk = [&](Shape s) { return random_tensor(std::move(s), rng, -0.5, 0.5); };
  p.wx_i = mk({d, hdim}); p.wh_i = mk({hdim, hdim}); p.b_i = mk({hdim});
  p.wx_f = mk({d, hdim}); p.wh_f = mk({hdim, hdim}); p.b_f = mk({hdim});
  p.wx_o = mk({d, hdim}); p.wh_o = mk({hdim, hdim}); p.b_o = mk({hdim});
  p.wx_g = mk({d, hdim}); p.wh_g = mk({hdim, hdim}); p.b_g = mk({hdim});
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    auto [h1, c1] = lstm_cell(x, h0, c0, p);
    auto [h2, c2] = lstm_cell(x, h1, c1, p);  // across-iteration flow
    return add(weighted_sum(h2, r), weighted_sum(c2, r));
  };
  std::vector<Tensor> leaves = {x,      h0,     c0,     p.wx_i, p.wh_i,
                                p.b_i,  p.wx_f, p.wh_f, p.b_f,  p.wx_o,
                                p.wh_o, p.b_o,  p.wx_g, p.wh_g, p.b_g};
  return fd_check("lstm_cell", loss, leaves, kPrimTol, rng);
}

FdResult check_bilinear(SplitMix64& rng) {
  Tensor map = random_tensor({2, 6, 7}, rng, 0.0, 1.0);
  // coordinates incl. out-of-bounds, nudged off pixel boundaries
  Tensor grid = random_tensor({4, 5, 2}, rng, -1.3, 1.3);
  for (real& g : grid.impl->v) {
    const double px = (static_cast<double>(g) + 1) * 2.5;
    if (std::fabs(px - std::round(px)) < 1e-3) g += real(0.01);
  }
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(bilinear_sample(map, grid), r);
  };
  return fd_check("bilinear_sample", loss, {map, grid}, kPrimTol, rng);
}

FdResult check_affine_grid(SplitMix64& rng) {
  Tensor theta = random_tensor({2, 3}, rng, -0.8, 0.8);
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(affine_grid(AffineTransform{theta, TransformMode::Raw}, 5, 6), r);
  };
  return fd_check("affine_grid", loss, {theta}, kPrimTol, rng);
}

FdResult check_inverse_scatter(SplitMix64& rng) {
  Tensor residual = random_tensor({1, 4, 4}, rng, 0.0, 1.0);
  // well-conditioned structured transform via the squash path
  Tensor raw = random_tensor({6}, rng, -0.6, 0.6);
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    AffineTransform t = compose_transform(raw, TransformMode::Full);
    return weighted_sum(inverse_scatter(residual, t, 8, 8), r);
  };
  return fd_check("inverse_scatter", loss, {residual, raw}, kPrimTol, rng);
}

FdResult check_compose(SplitMix64& rng) {
  Tensor raw = random_tensor({6}, rng, -1.0, 1.0);
  auto loss = [&, seed = rng.next()] {
    SplitMix64 r(seed);
    return weighted_sum(compose_transform(raw, TransformMode::Full).theta, r);
  };
  return fd_check("compose_transform", loss, {raw}, kPrimTol, rng);
}

// Fan-in-scaled weights so every activation in the graph sits at O(0.1)
// magnitude. The training init collapses deep activations to ~1e-5, which
// parks relu kinks inside any feasible finite-difference step; the gradcheck
// model must keep kinks far from the probe.
void healthy_init(ModelParams& params, SplitMix64& rng) {
  for (auto& [name, t] : params.tensors) {
    if (t.rank() == 1) {
      // positive biases keep a solid fraction of every relu layer alive; a
      // dead graph would make the whole check vacuous
      real* p = t.data();
      for (std::int64_t i = 0; i < t.numel(); ++i)
        p[i] = static_cast<real>(rng.uniform(0.02, 0.1));
      continue;
    }
    std::int64_t fan_in = t.rank() == 4
                              ? static_cast<std::int64_t>(t.dim(1)) * t.dim(2) * t.dim(3)
                              : t.dim(0);
    const double sigma = 0.5 * std::sqrt(2.0 / static_cast<double>(fan_in));
    real* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i)
      p[i] = static_cast<real>(rng.truncated_normal(sigma, 2.0));
  }
  // keep the first glimpse reasonably sized so regions stay in bounds
  Tensor& tb = params.at("thead.b");
  tb.data()[0] = 1;
  tb.data()[1] = 1;
}

FdResult check_end_to_end(SplitMix64& rng) {
  ModelConfig cfg;
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.map_encode_dim = 24;
  cfg.lstm_hidden = 20;
  cfg.ctx_hidden = 12;
  ModelParams params = make_params(cfg);
  healthy_init(params, rng);
  Tensor image = random_tensor({1, 1, 32, 32}, rng, 0.0, 1.0, false);
  Tensor target = random_tensor({1, 1, 4, 4}, rng, 0.0, 1.0, false);

  auto make_loss = [&] {
    ForwardResult f = drsan_forward(image, params, 3, TransformMode::Full);
    return loss(f.m0, f.mn, target);
  };
  std::vector<Tensor> leaves;
  for (auto& [name, t] : params.tensors) leaves.push_back(t);
  FdResult r = fd_check("drsan_3step", make_loss, leaves, 1e-3, rng, 4, 1e-5, 1e-6);
  // a mostly-skipped run means the graph went dead and nothing was verified
  if (r.skipped + r.nonsmooth > r.checked / 2)
    r.max_rel_err = std::max(r.max_rel_err, 1.0);
  return r;
}

}  // namespace

std::vector<FdResult> run_gradient_suite(std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<FdResult> out;
  out.push_back(check_conv(rng));
  out.push_back(check_conv_strided(rng));
  out.push_back(check_maxpool(rng));
  out.push_back(check_fc(rng));
  out.push_back(check_activations(rng));
  out.push_back(check_lstm(rng));
  out.push_back(check_bilinear(rng));
  out.push_back(check_affine_grid(rng));
  out.push_back(check_inverse_scatter(rng));
  out.push_back(check_compose(rng));
  out.push_back(check_end_to_end(rng));
  return out;
}

bool suite_passed(const std::vector<FdResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const FdResult& r) { return r.pass(); });
}

}  // namespace drsan
