#include "drsan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace drsan {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

static void check_shape_positive(const Shape& s, const char* who) {
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] <= 0)
      throw ShapeError(std::string(who) + ": extent of axis " +
                       std::to_string(i) + " must be positive, got " +
                       std::to_string(s[i]));
  }
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  return full(std::move(s), real(0), requires_grad);
}

Tensor Tensor::full(Shape s, real value, bool requires_grad) {
  check_shape_positive(s, "Tensor");
  Tensor t;
  t.impl = std::make_shared<TensorImpl>();
  t.impl->shape = std::move(s);
  t.impl->v.assign(static_cast<size_t>(shape_numel(t.impl->shape)), value);
  t.impl->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape s, std::vector<real> vals, bool requires_grad) {
  check_shape_positive(s, "Tensor");
  if (shape_numel(s) != static_cast<std::int64_t>(vals.size()))
    throw ShapeError("Tensor: " + std::to_string(vals.size()) +
                     " values do not fill shape " + shape_str(s));
  Tensor t;
  t.impl = std::make_shared<TensorImpl>();
  t.impl->shape = std::move(s);
  t.impl->v = std::move(vals);
  t.impl->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

real Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item: tensor has " + std::to_string(numel()) +
                     " elements, expected 1");
  return impl->v[0];
}

real Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = impl->shape;
  if (idx.size() != s.size())
    throw ShapeError("at: " + std::to_string(idx.size()) +
                     " indices for rank-" + std::to_string(s.size()) +
                     " tensor");
  std::int64_t flat = 0;
  size_t k = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[k])
      throw ShapeError("at: index " + std::to_string(i) +
                       " out of bounds on axis " + std::to_string(k));
    flat = flat * s[k] + i;
    ++k;
  }
  return impl->v[static_cast<size_t>(flat)];
}

const std::vector<real>& Tensor::grad() const {
  impl->ensure_grad();
  return impl->grad;
}

// ---- tape ----

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  if (g_active_tape)
    throw std::logic_error("Tape: a tape is already active on this thread");
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = nullptr; }

Tape* Tape::current() { return g_active_tape; }

void Tape::record(const char* op, std::vector<std::shared_ptr<TensorImpl>> ins,
                  std::vector<std::shared_ptr<TensorImpl>> outs,
                  std::function<void()> fn) {
  nodes_.push_back(Node{op, std::move(ins), std::move(outs), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must have exactly one element");

  // reset adjoints of every tensor this tape touches
  std::vector<TensorImpl*> touched;
  std::unordered_set<TensorImpl*> seen;
  auto visit = [&](const std::shared_ptr<TensorImpl>& t) {
    if (seen.insert(t.get()).second) touched.push_back(t.get());
  };
  for (const Node& n : nodes_) {
    for (const auto& t : n.ins) visit(t);
    for (const auto& t : n.outs) visit(t);
  }
  visit(loss.impl);
  for (TensorImpl* t : touched) t->adj.assign(t->v.size(), real(0));

  loss.impl->adj[0] = real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();

  for (TensorImpl* t : touched) {
    if (!t->requires_grad) continue;
    t->ensure_grad();
    for (size_t i = 0; i < t->grad.size(); ++i) t->grad[i] += t->adj[i];
  }
}

void backward(const Tensor& loss) {
  Tape* t = Tape::current();
  if (!t) throw std::logic_error("backward: no tape is active on this thread");
  t->backward(loss);
}

bool tape_recording(std::initializer_list<const Tensor*> ins) {
  if (!Tape::current()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

namespace {

Tensor make_out(Shape s, std::vector<real> vals) {
  return Tensor::from(std::move(s), std::move(vals));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(who) + ": shape " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

inline void axpy(real a, const real* x, real* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline real dot(const real* a, const real* b, int n) {
  real s = 0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<real> out(a.values());
  const real* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  Tensor o = make_out(a.shape(), std::move(out));
  if (tape_recording({&a, &b})) {
    o.impl->requires_grad = true;
    auto ai = a.impl, bi = b.impl, oi = o.impl;
    Tape::current()->record("add", {ai, bi}, {oi}, [=] {
      if (ai->requires_grad)
        for (size_t i = 0; i < oi->adj.size(); ++i) ai->adj[i] += oi->adj[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < oi->adj.size(); ++i) bi->adj[i] += oi->adj[i];
    });
  }
  return o;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<real> out(a.values());
  const real* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  Tensor o = make_out(a.shape(), std::move(out));
  if (tape_recording({&a, &b})) {
    o.impl->requires_grad = true;
    auto ai = a.impl, bi = b.impl, oi = o.impl;
    Tape::current()->record("sub", {ai, bi}, {oi}, [=] {
      if (ai->requires_grad)
        for (size_t i = 0; i < oi->adj.size(); ++i) ai->adj[i] += oi->adj[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < oi->adj.size(); ++i) bi->adj[i] -= oi->adj[i];
    });
  }
  return o;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<real> out(a.values());
  const real* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  Tensor o = make_out(a.shape(), std::move(out));
  if (tape_recording({&a, &b})) {
    o.impl->requires_grad = true;
    auto ai = a.impl, bi = b.impl, oi = o.impl;
    Tape::current()->record("mul", {ai, bi}, {oi}, [=] {
      if (ai->requires_grad)
        for (size_t i = 0; i < oi->adj.size(); ++i)
          ai->adj[i] += oi->adj[i] * bi->v[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < oi->adj.size(); ++i)
          bi->adj[i] += oi->adj[i] * ai->v[i];
    });
  }
  return o;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<real> out(a.values());
  const real* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] /= pb[i];
  Tensor o = make_out(a.shape(), std::move(out));
  if (tape_recording({&a, &b})) {
    o.impl->requires_grad = true;
    auto ai = a.impl, bi = b.impl, oi = o.impl;
    Tape::current()->record("div", {ai, bi}, {oi}, [=] {
      for (size_t i = 0; i < oi->adj.size(); ++i) {
        const real inv = real(1) / bi->v[i];
        if (ai->requires_grad) ai->adj[i] += oi->adj[i] * inv;
        if (bi->requires_grad)
          bi->adj[i] -= oi->adj[i] * ai->v[i] * inv * inv;
      }
    });
  }
  return o;
}

Tensor neg(const Tensor& a) { return linear_scale(a, real(-1), real(0)); }

Tensor linear_scale(const Tensor& x, real a, real b) {
  std::vector<real> out(x.values());
  for (real& v : out) v = a * v + b;
  Tensor o = make_out(x.shape(), std::move(out));
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("linear_scale", {xi}, {oi}, [=] {
      for (size_t i = 0; i < oi->adj.size(); ++i) xi->adj[i] += a * oi->adj[i];
    });
  }
  return o;
}

static real stable_sigmoid(real x) {
  if (x >= 0) {
    const real e = std::exp(-x);
    return real(1) / (real(1) + e);
  }
  const real e = std::exp(x);
  return e / (real(1) + e);
}

Tensor activation(const Tensor& x, Act kind) {
  std::vector<real> out(x.values());
  switch (kind) {
    case Act::Relu:
      for (real& v : out) v = v > 0 ? v : real(0);
      break;
    case Act::Sigmoid:
      for (real& v : out) v = stable_sigmoid(v);
      break;
    case Act::Tanh:
      for (real& v : out) v = std::tanh(v);
      break;
  }
  Tensor o = make_out(x.shape(), std::move(out));
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("activation", {xi}, {oi}, [=] {
      switch (kind) {
        case Act::Relu:
          // slope 0 at the kink
          for (size_t i = 0; i < oi->adj.size(); ++i)
            if (xi->v[i] > 0) xi->adj[i] += oi->adj[i];
          break;
        case Act::Sigmoid:
          for (size_t i = 0; i < oi->adj.size(); ++i) {
            const real y = oi->v[i];
            xi->adj[i] += oi->adj[i] * y * (real(1) - y);
          }
          break;
        case Act::Tanh:
          for (size_t i = 0; i < oi->adj.size(); ++i) {
            const real y = oi->v[i];
            xi->adj[i] += oi->adj[i] * (real(1) - y * y);
          }
          break;
      }
    });
  }
  return o;
}

Tensor relu(const Tensor& x) { return activation(x, Act::Relu); }
Tensor sigmoid(const Tensor& x) { return activation(x, Act::Sigmoid); }
Tensor tanh(const Tensor& x) { return activation(x, Act::Tanh); }

Tensor sin(const Tensor& x) {
  std::vector<real> out(x.values());
  for (real& v : out) v = std::sin(v);
  Tensor o = make_out(x.shape(), std::move(out));
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("sin", {xi}, {oi}, [=] {
      for (size_t i = 0; i < oi->adj.size(); ++i)
        xi->adj[i] += oi->adj[i] * std::cos(xi->v[i]);
    });
  }
  return o;
}

Tensor cos(const Tensor& x) {
  std::vector<real> out(x.values());
  for (real& v : out) v = std::cos(v);
  Tensor o = make_out(x.shape(), std::move(out));
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("cos", {xi}, {oi}, [=] {
      for (size_t i = 0; i < oi->adj.size(); ++i)
        xi->adj[i] -= oi->adj[i] * std::sin(xi->v[i]);
    });
  }
  return o;
}

Tensor sum_all(const Tensor& x) {
  real s = 0;
  for (real v : x.values()) s += v;
  Tensor o = Tensor::scalar(s);
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("sum_all", {xi}, {oi}, [=] {
      const real g = oi->adj[0];
      for (size_t i = 0; i < xi->adj.size(); ++i) xi->adj[i] += g;
    });
  }
  return o;
}

Tensor reshape(const Tensor& x, Shape s) {
  if (shape_numel(s) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(s));
  Tensor o = make_out(std::move(s), x.values());
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("reshape", {xi}, {oi}, [=] {
      for (size_t i = 0; i < oi->adj.size(); ++i) xi->adj[i] += oi->adj[i];
    });
  }
  return o;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  for (const Tensor& t : xs) {
    if (t.rank() != 4 || t.dim(0) != 1)
      throw ShapeError("concat_channels: inputs must be [1,C,H,W], got " +
                       shape_str(t.shape()));
    if (t.dim(2) != xs[0].dim(2) || t.dim(3) != xs[0].dim(3))
      throw ShapeError("concat_channels: spatial axes disagree: " +
                       shape_str(t.shape()) + " vs " +
                       shape_str(xs[0].shape()));
  }
  int ctotal = 0;
  for (const Tensor& t : xs) ctotal += t.dim(1);
  const int h = xs[0].dim(2), w = xs[0].dim(3);
  std::vector<real> out;
  out.reserve(static_cast<size_t>(ctotal) * h * w);
  for (const Tensor& t : xs)
    out.insert(out.end(), t.values().begin(), t.values().end());
  Tensor o = make_out({1, ctotal, h, w}, std::move(out));

  bool rec = false;
  for (const Tensor& t : xs)
    if (tape_recording({&t})) rec = true;
  if (rec) {
    o.impl->requires_grad = true;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& t : xs) ins.push_back(t.impl);
    auto oi = o.impl;
    Tape::current()->record("concat_channels", ins, {oi}, [ins, oi] {
      size_t off = 0;
      for (const auto& xi : ins) {
        if (xi->requires_grad)
          for (size_t i = 0; i < xi->adj.size(); ++i)
            xi->adj[i] += oi->adj[off + i];
        off += xi->v.size();
      }
    });
  }
  return o;
}

Tensor spatial_mean(const Tensor& x) {
  if (x.rank() != 4 || x.dim(0) != 1)
    throw ShapeError("spatial_mean: input must be [1,C,H,W], got " +
                     shape_str(x.shape()));
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int plane = h * w;
  std::vector<real> out(static_cast<size_t>(c), real(0));
  const real* px = x.data();
  for (int ci = 0; ci < c; ++ci) {
    real s = 0;
    for (int i = 0; i < plane; ++i) s += px[ci * plane + i];
    out[static_cast<size_t>(ci)] = s / real(plane);
  }
  Tensor o = make_out({1, c}, std::move(out));
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("spatial_mean", {xi}, {oi}, [=] {
      for (int ci = 0; ci < c; ++ci) {
        const real g = oi->adj[static_cast<size_t>(ci)] / real(plane);
        for (int i = 0; i < plane; ++i)
          xi->adj[static_cast<size_t>(ci * plane + i)] += g;
      }
    });
  }
  return o;
}

Tensor select(const Tensor& x, std::int64_t flat_index) {
  if (flat_index < 0 || flat_index >= x.numel())
    throw ShapeError("select: index " + std::to_string(flat_index) +
                     " out of range for " + std::to_string(x.numel()) +
                     " elements");
  Tensor o = Tensor::scalar(x.values()[static_cast<size_t>(flat_index)]);
  if (tape_recording({&x})) {
    o.impl->requires_grad = true;
    auto xi = x.impl, oi = o.impl;
    Tape::current()->record("select", {xi}, {oi}, [=] {
      xi->adj[static_cast<size_t>(flat_index)] += oi->adj[0];
    });
  }
  return o;
}

Tensor stack_scalars(const std::vector<Tensor>& xs, Shape s) {
  if (shape_numel(s) != static_cast<std::int64_t>(xs.size()))
    throw ShapeError("stack_scalars: " + std::to_string(xs.size()) +
                     " scalars do not fill shape " + shape_str(s));
  std::vector<real> out;
  out.reserve(xs.size());
  for (const Tensor& t : xs) {
    if (t.numel() != 1)
      throw ShapeError("stack_scalars: every input must be a scalar, got " +
                       shape_str(t.shape()));
    out.push_back(t.values()[0]);
  }
  Tensor o = make_out(std::move(s), std::move(out));
  bool rec = false;
  for (const Tensor& t : xs)
    if (tape_recording({&t})) rec = true;
  if (rec) {
    o.impl->requires_grad = true;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& t : xs) ins.push_back(t.impl);
    auto oi = o.impl;
    Tape::current()->record("stack_scalars", ins, {oi}, [ins, oi] {
      for (size_t i = 0; i < ins.size(); ++i)
        if (ins[i]->requires_grad) ins[i]->adj[0] += oi->adj[i];
    });
  }
  return o;
}

// ---- conv2d ----

namespace {

// copies one [C,H,W] sample into a zero-padded [C,H+2p,W+2p] buffer
void fill_padded(const real* src, real* dst, int c, int h, int w, int pad) {
  const int hp = h + 2 * pad, wp = w + 2 * pad;
  std::fill(dst, dst + static_cast<size_t>(c) * hp * wp, real(0));
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      std::copy(src + (static_cast<size_t>(ci) * h + y) * w,
                src + (static_cast<size_t>(ci) * h + y) * w + w,
                dst + (static_cast<size_t>(ci) * hp + y + pad) * wp + pad);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  if (input.rank() != 4)
    throw ShapeError("conv2d: input must be [N,C,H,W], got " +
                     shape_str(input.shape()));
  if (weight.rank() != 4)
    throw ShapeError("conv2d: weight must be [K,C,kh,kw], got " +
                     shape_str(weight.shape()));
  if (bias.rank() != 1)
    throw ShapeError("conv2d: bias must be rank-1, got " +
                     shape_str(bias.shape()));
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int k = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c)
    throw ShapeError("conv2d: channel axis mismatch, input C=" +
                     std::to_string(c) + " vs weight C=" +
                     std::to_string(weight.dim(1)));
  if (bias.dim(0) != k)
    throw ShapeError("conv2d: bias axis 0 = " + std::to_string(bias.dim(0)) +
                     " vs K=" + std::to_string(k));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " exceeds padded input " +
                     std::to_string(h + 2 * pad) + "x" +
                     std::to_string(w + 2 * pad));

  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  const int hp = h + 2 * pad, wp = w + 2 * pad;

  std::vector<real> out(static_cast<size_t>(n) * k * ho * wo);
  std::vector<real> padbuf(static_cast<size_t>(c) * hp * wp);
  const real* pin = input.data();
  const real* pw = weight.data();
  const real* pb = bias.data();

  for (int ni = 0; ni < n; ++ni) {
    fill_padded(pin + static_cast<size_t>(ni) * c * h * w, padbuf.data(), c, h,
                w, pad);
    for (int ki = 0; ki < k; ++ki) {
      real* op = out.data() + (static_cast<size_t>(ni) * k + ki) * ho * wo;
      std::fill(op, op + static_cast<size_t>(ho) * wo, pb[ki]);
      for (int ci = 0; ci < c; ++ci) {
        for (int i = 0; i < kh; ++i) {
          for (int j = 0; j < kw; ++j) {
            const real wv = pw[((static_cast<size_t>(ki) * c + ci) * kh + i) *
                                   kw + j];
            const real* ip =
                padbuf.data() + (static_cast<size_t>(ci) * hp + i) * wp + j;
            if (stride == 1) {
              for (int y = 0; y < ho; ++y)
                axpy(wv, ip + static_cast<size_t>(y) * wp,
                     op + static_cast<size_t>(y) * wo, wo);
            } else {
              for (int y = 0; y < ho; ++y) {
                const real* irow = ip + static_cast<size_t>(y) * stride * wp;
                real* orow = op + static_cast<size_t>(y) * wo;
                for (int x = 0; x < wo; ++x) orow[x] += wv * irow[x * stride];
              }
            }
          }
        }
      }
    }
  }

  Tensor o = make_out({n, k, ho, wo}, std::move(out));
  if (tape_recording({&input, &weight, &bias})) {
    o.impl->requires_grad = true;
    auto xi = input.impl, wi = weight.impl, bi = bias.impl, oi = o.impl;
    Tape::current()->record("conv2d", {xi, wi, bi}, {oi}, [=] {
      std::vector<real> pbuf(static_cast<size_t>(c) * hp * wp);
      std::vector<real> dpad;
      if (xi->requires_grad) dpad.resize(static_cast<size_t>(c) * hp * wp);
      for (int ni = 0; ni < n; ++ni) {
        if (wi->requires_grad)
          fill_padded(xi->v.data() + static_cast<size_t>(ni) * c * h * w,
                      pbuf.data(), c, h, w, pad);
        if (xi->requires_grad) std::fill(dpad.begin(), dpad.end(), real(0));
        for (int ki = 0; ki < k; ++ki) {
          const real* go =
              oi->adj.data() + (static_cast<size_t>(ni) * k + ki) * ho * wo;
          if (bi->requires_grad) {
            real s = 0;
            for (int i = 0; i < ho * wo; ++i) s += go[i];
            bi->adj[static_cast<size_t>(ki)] += s;
          }
          for (int ci = 0; ci < c; ++ci) {
            for (int i = 0; i < kh; ++i) {
              for (int j = 0; j < kw; ++j) {
                const size_t widx =
                    ((static_cast<size_t>(ki) * c + ci) * kh + i) * kw + j;
                const size_t poff = (static_cast<size_t>(ci) * hp + i) * wp + j;
                if (wi->requires_grad) {
                  real s = 0;
                  if (stride == 1) {
                    for (int y = 0; y < ho; ++y)
                      s += dot(go + static_cast<size_t>(y) * wo,
                               pbuf.data() + poff + static_cast<size_t>(y) * wp,
                               wo);
                  } else {
                    for (int y = 0; y < ho; ++y) {
                      const real* irow =
                          pbuf.data() + poff +
                          static_cast<size_t>(y) * stride * wp;
                      const real* grow = go + static_cast<size_t>(y) * wo;
                      for (int x = 0; x < wo; ++x)
                        s += grow[x] * irow[x * stride];
                    }
                  }
                  wi->adj[widx] += s;
                }
                if (xi->requires_grad) {
                  const real wv = wi->v[widx];
                  if (stride == 1) {
                    for (int y = 0; y < ho; ++y)
                      axpy(wv, go + static_cast<size_t>(y) * wo,
                           dpad.data() + poff + static_cast<size_t>(y) * wp,
                           wo);
                  } else {
                    for (int y = 0; y < ho; ++y) {
                      real* drow =
                          dpad.data() + poff +
                          static_cast<size_t>(y) * stride * wp;
                      const real* grow = go + static_cast<size_t>(y) * wo;
                      for (int x = 0; x < wo; ++x)
                        drow[x * stride] += wv * grow[x];
                    }
                  }
                }
              }
            }
          }
        }
        if (xi->requires_grad) {
          real* dx = xi->adj.data() + static_cast<size_t>(ni) * c * h * w;
          for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y) {
              const real* src =
                  dpad.data() + (static_cast<size_t>(ci) * hp + y + pad) * wp +
                  pad;
              real* dst = dx + (static_cast<size_t>(ci) * h + y) * w;
              for (int x = 0; x < w; ++x) dst[x] += src[x];
            }
        }
      }
    });
  }
  return o;
}

// ---- maxpool2 ----

Tensor maxpool2(const Tensor& input) {
  if (input.rank() != 4)
    throw ShapeError("maxpool2: input must be [N,C,H,W], got " +
                     shape_str(input.shape()));
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  if (h % 2 != 0)
    throw ShapeError("maxpool2: axis 2 extent " + std::to_string(h) +
                     " is odd");
  if (w % 2 != 0)
    throw ShapeError("maxpool2: axis 3 extent " + std::to_string(w) +
                     " is odd");
  const int ho = h / 2, wo = w / 2;
  std::vector<real> out(static_cast<size_t>(n) * c * ho * wo);
  // argmax positions; ties keep the first element in row-major window order
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const real* pin = input.data();
  for (int p = 0; p < n * c; ++p) {
    const real* plane = pin + static_cast<size_t>(p) * h * w;
    real* oplane = out.data() + static_cast<size_t>(p) * ho * wo;
    std::int64_t* aplane = argmax->data() + static_cast<size_t>(p) * ho * wo;
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        std::int64_t best = (static_cast<std::int64_t>(2 * y) * w) + 2 * x;
        real bv = plane[best];
        const std::int64_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::int64_t idx : cand) {
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        }
        oplane[y * wo + x] = bv;
        aplane[y * wo + x] = static_cast<std::int64_t>(p) * h * w + best;
      }
    }
  }
  Tensor o = make_out({n, c, ho, wo}, std::move(out));
  if (tape_recording({&input})) {
    o.impl->requires_grad = true;
    auto xi = input.impl, oi = o.impl;
    Tape::current()->record("maxpool2", {xi}, {oi}, [=] {
      for (size_t i = 0; i < oi->adj.size(); ++i)
        xi->adj[static_cast<size_t>((*argmax)[i])] += oi->adj[i];
    });
  }
  return o;
}

// ---- fully connected ----

static Tensor fc_impl(const Tensor& input, const Tensor& weight,
                      const Tensor* bias) {
  if (input.rank() != 2)
    throw ShapeError("fully_connected: input must be [N,D], got " +
                     shape_str(input.shape()));
  if (weight.rank() != 2)
    throw ShapeError("fully_connected: weight must be [D,M], got " +
                     shape_str(weight.shape()));
  const int n = input.dim(0), d = input.dim(1), m = weight.dim(1);
  if (weight.dim(0) != d)
    throw ShapeError("fully_connected: inner axis mismatch, input D=" +
                     std::to_string(d) + " vs weight D=" +
                     std::to_string(weight.dim(0)));
  if (bias && (bias->rank() != 1 || bias->dim(0) != m))
    throw ShapeError("fully_connected: bias must be [M]=" + std::to_string(m) +
                     ", got " + shape_str(bias->shape()));

  std::vector<real> out(static_cast<size_t>(n) * m, real(0));
  const real* px = input.data();
  const real* pw = weight.data();
  for (int ni = 0; ni < n; ++ni) {
    real* orow = out.data() + static_cast<size_t>(ni) * m;
    if (bias) std::copy(bias->data(), bias->data() + m, orow);
    for (int di = 0; di < d; ++di)
      axpy(px[static_cast<size_t>(ni) * d + di],
           pw + static_cast<size_t>(di) * m, orow, m);
  }
  Tensor o = make_out({n, m}, std::move(out));

  const bool rec = bias ? tape_recording({&input, &weight, bias})
                        : tape_recording({&input, &weight});
  if (rec) {
    o.impl->requires_grad = true;
    auto xi = input.impl, wi = weight.impl, oi = o.impl;
    auto bi = bias ? bias->impl : nullptr;
    std::vector<std::shared_ptr<TensorImpl>> ins = {xi, wi};
    if (bi) ins.push_back(bi);
    Tape::current()->record("fully_connected", ins, {oi}, [=] {
      for (int ni = 0; ni < n; ++ni) {
        const real* go = oi->adj.data() + static_cast<size_t>(ni) * m;
        if (bi && bi->requires_grad)
          for (int mi = 0; mi < m; ++mi) bi->adj[static_cast<size_t>(mi)] += go[mi];
        for (int di = 0; di < d; ++di) {
          const size_t xidx = static_cast<size_t>(ni) * d + di;
          if (xi->requires_grad)
            xi->adj[xidx] += dot(go, wi->v.data() + static_cast<size_t>(di) * m, m);
          if (wi->requires_grad)
            axpy(xi->v[xidx], go, wi->adj.data() + static_cast<size_t>(di) * m, m);
        }
      }
    });
  }
  return o;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight,
                       const Tensor& bias) {
  return fc_impl(input, weight, &bias);
}

Tensor fully_connected(const Tensor& input, const Tensor& weight) {
  return fc_impl(input, weight, nullptr);
}

// ---- lstm ----

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& p) {
  auto gate = [&](const Tensor& wx, const Tensor& wh, const Tensor& b) {
    return add(fully_connected(x, wx, b), fully_connected(h_prev, wh));
  };
  const Tensor i = sigmoid(gate(p.wx_i, p.wh_i, p.b_i));
  const Tensor f = sigmoid(gate(p.wx_f, p.wh_f, p.b_f));
  const Tensor o = sigmoid(gate(p.wx_o, p.wh_o, p.b_o));
  const Tensor g = tanh(gate(p.wx_g, p.wh_g, p.b_g));
  const Tensor c = add(mul(f, c_prev), mul(i, g));
  const Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace drsan
