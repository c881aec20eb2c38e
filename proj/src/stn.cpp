#include "drsan/stn.hpp"

#include <cmath>

namespace drsan {

const char* mode_name(TransformMode m) {
  switch (m) {
    case TransformMode::Translation: return "t";
    case TransformMode::TranslationScale: return "ts";
    case TransformMode::Full: return "tsr";
    case TransformMode::Raw: return "raw";
  }
  return "?";
}

TransformMode mode_from_string(const std::string& s) {
  if (s == "t") return TransformMode::Translation;
  if (s == "ts") return TransformMode::TranslationScale;
  if (s == "tsr") return TransformMode::Full;
  if (s == "raw") return TransformMode::Raw;
  throw ConfigError("unknown transform mode '" + s + "' (expected t|ts|tsr|raw)");
}

std::array<double, 6> AffineTransform::entries() const {
  std::array<double, 6> e{};
  for (int i = 0; i < 6; ++i) e[static_cast<size_t>(i)] = static_cast<double>(theta.data()[i]);
  return e;
}

double AffineTransform::det() const {
  const auto e = entries();
  return e[0] * e[4] - e[1] * e[3];
}

AffineTransform compose_transform(const Tensor& raw, TransformMode mode,
                                  double s_min) {
  if (mode == TransformMode::Raw) {
    if (raw.numel() != 6)
      throw ShapeError("compose_transform: raw mode needs 6 scalars, got " +
                       std::to_string(raw.numel()));
    return AffineTransform{reshape(raw, {2, 3}), mode};
  }
  if (raw.numel() < 5)
    throw ShapeError("compose_transform: structured modes need 5 scalars, got " +
                     std::to_string(raw.numel()));

  const Tensor flat = reshape(raw, {static_cast<int>(raw.numel())});
  const Tensor tx = tanh(select(flat, 3));
  const Tensor ty = tanh(select(flat, 4));
  const Tensor one = Tensor::scalar(1);
  const Tensor zero = Tensor::scalar(0);

  if (mode == TransformMode::Translation)
    return AffineTransform{stack_scalars({one, zero, tx, zero, one, ty}, {2, 3}),
                           mode};

  const real lo = static_cast<real>(s_min);
  const Tensor sx = linear_scale(sigmoid(select(flat, 0)), real(1) - lo, lo);
  const Tensor sy = linear_scale(sigmoid(select(flat, 1)), real(1) - lo, lo);

  if (mode == TransformMode::TranslationScale)
    return AffineTransform{stack_scalars({sx, zero, tx, zero, sy, ty}, {2, 3}),
                           mode};

  const Tensor phi = select(flat, 2);
  const Tensor c = cos(phi);
  const Tensor s = sin(phi);
  return AffineTransform{
      stack_scalars({mul(sx, c), neg(mul(sy, s)), tx, mul(sx, s), mul(sy, c), ty},
                    {2, 3}),
      mode};
}

Tensor affine_grid(const AffineTransform& t, int out_h, int out_w) {
  if (out_h < 2 || out_w < 2)
    throw ShapeError("affine_grid: output extents must be >= 2, got " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  const Tensor& theta = t.theta;
  if (theta.rank() != 2 || theta.dim(0) != 2 || theta.dim(1) != 3)
    throw ShapeError("affine_grid: theta must be [2,3], got " +
                     shape_str(theta.shape()));

  const real* th = theta.data();
  std::vector<real> out(static_cast<size_t>(out_h) * out_w * 2);
  for (int y = 0; y < out_h; ++y) {
    const real yt = real(-1) + real(2) * y / real(out_h - 1);
    for (int x = 0; x < out_w; ++x) {
      const real xt = real(-1) + real(2) * x / real(out_w - 1);
      real* g = out.data() + (static_cast<size_t>(y) * out_w + x) * 2;
      g[0] = th[0] * xt + th[1] * yt + th[2];
      g[1] = th[3] * xt + th[4] * yt + th[5];
    }
  }
  Tensor o = Tensor::from({out_h, out_w, 2}, std::move(out));
  if (tape_recording({&theta})) {
    o.impl->requires_grad = true;
    auto ti = theta.impl, oi = o.impl;
    Tape::current()->record("affine_grid", {ti}, {oi}, [=] {
      for (int y = 0; y < out_h; ++y) {
        const real yt = real(-1) + real(2) * y / real(out_h - 1);
        for (int x = 0; x < out_w; ++x) {
          const real xt = real(-1) + real(2) * x / real(out_w - 1);
          const real* g =
              oi->adj.data() + (static_cast<size_t>(y) * out_w + x) * 2;
          ti->adj[0] += g[0] * xt;
          ti->adj[1] += g[0] * yt;
          ti->adj[2] += g[0];
          ti->adj[3] += g[1] * xt;
          ti->adj[4] += g[1] * yt;
          ti->adj[5] += g[1];
        }
      }
    });
  }
  return o;
}

namespace {

inline bool inside(int v, int bound) { return v >= 0 && v < bound; }

}  // namespace

Tensor bilinear_sample(const Tensor& map, const Tensor& grid) {
  if (map.rank() != 3)
    throw ShapeError("bilinear_sample: map must be [C,H,W], got " +
                     shape_str(map.shape()));
  if (grid.rank() != 3 || grid.dim(2) != 2)
    throw ShapeError("bilinear_sample: grid must be [h,w,2], got " +
                     shape_str(grid.shape()));
  const int c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const int gh = grid.dim(0), gw = grid.dim(1);

  std::vector<real> out(static_cast<size_t>(c) * gh * gw, real(0));
  const real* pm = map.data();
  const real* pg = grid.data();
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      const real* g = pg + (static_cast<size_t>(y) * gw + x) * 2;
      // align-corners: +-1 lands on pixel centers 0 and W-1
      const real px = (g[0] + real(1)) * real(w - 1) / real(2);
      const real py = (g[1] + real(1)) * real(h - 1) / real(2);
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const real fx = px - real(x0);
      const real fy = py - real(y0);
      const real wx0 = real(1) - fx, wx1 = fx;
      const real wy0 = real(1) - fy, wy1 = fy;
      for (int ci = 0; ci < c; ++ci) {
        const real* plane = pm + static_cast<size_t>(ci) * h * w;
        const real v00 = (inside(x0, w) && inside(y0, h))
                             ? plane[static_cast<size_t>(y0) * w + x0] : real(0);
        const real v01 = (inside(x0 + 1, w) && inside(y0, h))
                             ? plane[static_cast<size_t>(y0) * w + x0 + 1] : real(0);
        const real v10 = (inside(x0, w) && inside(y0 + 1, h))
                             ? plane[(static_cast<size_t>(y0) + 1) * w + x0] : real(0);
        const real v11 = (inside(x0 + 1, w) && inside(y0 + 1, h))
                             ? plane[(static_cast<size_t>(y0) + 1) * w + x0 + 1] : real(0);
        out[(static_cast<size_t>(ci) * gh + y) * gw + x] =
            wy0 * (wx0 * v00 + wx1 * v01) + wy1 * (wx0 * v10 + wx1 * v11);
      }
    }
  }
  Tensor o = Tensor::from({c, gh, gw}, std::move(out));
  if (tape_recording({&map, &grid})) {
    o.impl->requires_grad = true;
    auto mi = map.impl, gi = grid.impl, oi = o.impl;
    Tape::current()->record("bilinear_sample", {mi, gi}, {oi}, [=] {
      for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
          const real* g = gi->v.data() + (static_cast<size_t>(y) * gw + x) * 2;
          const real px = (g[0] + real(1)) * real(w - 1) / real(2);
          const real py = (g[1] + real(1)) * real(h - 1) / real(2);
          const int x0 = static_cast<int>(std::floor(px));
          const int y0 = static_cast<int>(std::floor(py));
          const real fx = px - real(x0);
          const real fy = py - real(y0);
          const real wx0 = real(1) - fx, wx1 = fx;
          const real wy0 = real(1) - fy, wy1 = fy;
          real dpx = 0, dpy = 0;
          for (int ci = 0; ci < c; ++ci) {
            const real go = oi->adj[(static_cast<size_t>(ci) * gh + y) * gw + x];
            if (go == real(0) && !gi->requires_grad) continue;
            real* aplane = mi->requires_grad
                               ? mi->adj.data() + static_cast<size_t>(ci) * h * w
                               : nullptr;
            const real* vplane = mi->v.data() + static_cast<size_t>(ci) * h * w;
            real v00 = 0, v01 = 0, v10 = 0, v11 = 0;
            if (inside(x0, w) && inside(y0, h)) {
              v00 = vplane[static_cast<size_t>(y0) * w + x0];
              if (aplane) aplane[static_cast<size_t>(y0) * w + x0] += go * wy0 * wx0;
            }
            if (inside(x0 + 1, w) && inside(y0, h)) {
              v01 = vplane[static_cast<size_t>(y0) * w + x0 + 1];
              if (aplane) aplane[static_cast<size_t>(y0) * w + x0 + 1] += go * wy0 * wx1;
            }
            if (inside(x0, w) && inside(y0 + 1, h)) {
              v10 = vplane[(static_cast<size_t>(y0) + 1) * w + x0];
              if (aplane) aplane[(static_cast<size_t>(y0) + 1) * w + x0] += go * wy1 * wx0;
            }
            if (inside(x0 + 1, w) && inside(y0 + 1, h)) {
              v11 = vplane[(static_cast<size_t>(y0) + 1) * w + x0 + 1];
              if (aplane) aplane[(static_cast<size_t>(y0) + 1) * w + x0 + 1] += go * wy1 * wx1;
            }
            dpx += go * ((v01 - v00) * wy0 + (v11 - v10) * wy1);
            dpy += go * ((v10 - v00) * wx0 + (v11 - v01) * wx1);
          }
          if (gi->requires_grad) {
            real* ga = gi->adj.data() + (static_cast<size_t>(y) * gw + x) * 2;
            ga[0] += dpx * real(w - 1) / real(2);
            ga[1] += dpy * real(h - 1) / real(2);
          }
        }
      }
    });
  }
  return o;
}

AffineTransform invert_affine(const AffineTransform& t) {
  const double d = t.det();
  if (std::fabs(d) < kMinAbsDet)
    throw SingularTransformError(
        "invert_affine: transform is near singular, det = " + std::to_string(d),
        d);

  const Tensor flat = reshape(t.theta, {6});
  const Tensor t11 = select(flat, 0), t12 = select(flat, 1), t13 = select(flat, 2);
  const Tensor t21 = select(flat, 3), t22 = select(flat, 4), t23 = select(flat, 5);
  const Tensor det = sub(mul(t11, t22), mul(t12, t21));
  const Tensor r = div(Tensor::scalar(1), det);

  const Tensor i11 = mul(r, t22);
  const Tensor i12 = neg(mul(r, t12));
  const Tensor i13 = mul(r, sub(mul(t12, t23), mul(t13, t22)));
  const Tensor i21 = neg(mul(r, t21));
  const Tensor i22 = mul(r, t11);
  const Tensor i23 = mul(r, sub(mul(t13, t21), mul(t11, t23)));

  return AffineTransform{
      stack_scalars({i11, i12, i13, i21, i22, i23}, {2, 3}), t.mode};
}

Tensor inverse_scatter(const Tensor& residual, const AffineTransform& t,
                       int out_h, int out_w) {
  const AffineTransform inv = invert_affine(t);
  return bilinear_sample(residual, affine_grid(inv, out_h, out_w));
}

}  // namespace drsan
