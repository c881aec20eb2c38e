#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "drsan/common.hpp"

namespace drsan {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<real> v;
  bool requires_grad = false;
  std::vector<real> grad;  // accumulated across backward() calls
  std::vector<real> adj;   // scratch adjoint for one backward sweep

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  void ensure_grad() {
    if (grad.size() != v.size()) grad.assign(v.size(), real(0));
  }
};

// Value-semantic handle to a shared dense buffer. Graph recording is implicit:
// while a Tape is alive on the current thread, any op whose inputs require
// gradients records a node; with no tape active ops are plain functions.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, real value, bool requires_grad = false);
  static Tensor from(Shape s, std::vector<real> vals, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const { return impl->shape; }
  int dim(int axis) const { return impl->shape[static_cast<size_t>(axis)]; }
  int rank() const { return static_cast<int>(impl->shape.size()); }
  std::int64_t numel() const { return impl->numel(); }
  bool requires_grad() const { return impl && impl->requires_grad; }
  void set_requires_grad(bool b) { impl->requires_grad = b; }

  real* data() { return impl->v.data(); }
  const real* data() const { return impl->v.data(); }
  const std::vector<real>& values() const { return impl->v; }

  real item() const;
  real at(std::initializer_list<int> idx) const;

  const std::vector<real>& grad() const;
  void zero_grad() {
    if (impl) impl->grad.assign(impl->v.size(), real(0));
  }

  std::shared_ptr<TensorImpl> impl;
};

// Tape of recorded primitive applications, in forward (topological) order.
// Construction installs the tape as the active one for this thread; nesting is
// not allowed. backward() replays nodes in reverse, accumulating adjoints, and
// finally adds each touched requires_grad tensor's adjoint into its grad, so
// repeated calls accumulate exact multiples.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }

  static Tape* current();

  void record(const char* op, std::vector<std::shared_ptr<TensorImpl>> ins,
              std::vector<std::shared_ptr<TensorImpl>> outs,
              std::function<void()> fn);

 private:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    std::vector<std::shared_ptr<TensorImpl>> outs;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
};

// Runs backward on the thread's active tape.
void backward(const Tensor& loss);

// True when a tape is active and at least one input requires gradients; ops
// use this to decide whether to record.
bool tape_recording(std::initializer_list<const Tensor*> ins);

// ---- elementwise / structural primitives ----

enum class Act { Relu, Sigmoid, Tanh };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
// a*x + b with scalar constants
Tensor linear_scale(const Tensor& x, real a, real b);
Tensor activation(const Tensor& x, Act kind);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor sum_all(const Tensor& x);  // -> [1]
Tensor reshape(const Tensor& x, Shape s);
Tensor concat_channels(const std::vector<Tensor>& xs);  // [1,Ci,H,W] along C
Tensor spatial_mean(const Tensor& x);                   // [1,C,H,W] -> [1,C]
Tensor select(const Tensor& x, std::int64_t flat_index);  // -> [1]
Tensor stack_scalars(const std::vector<Tensor>& xs, Shape s);

// ---- dense layers ----

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);
Tensor maxpool2(const Tensor& input);
Tensor fully_connected(const Tensor& input, const Tensor& weight,
                       const Tensor& bias);
Tensor fully_connected(const Tensor& input, const Tensor& weight);

struct LstmParams {
  Tensor wx_i, wh_i, b_i;
  Tensor wx_f, wh_f, b_f;
  Tensor wx_o, wh_o, b_o;
  Tensor wx_g, wh_g, b_g;
};

// Standard gated cell: sigmoid input/forget/output gates, tanh candidate.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& p);

}  // namespace drsan
