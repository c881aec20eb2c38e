#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "drsan/gradcheck.hpp"
#include "drsan/tensor.hpp"
#include "oracles.hpp"

using namespace drsan;

namespace {

Tensor rand_tensor(Shape s, SplitMix64& rng, double lo = -1, double hi = 1,
                   bool rg = false) {
  std::vector<real> v(static_cast<size_t>(shape_numel(s)));
  for (real& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return Tensor::from(std::move(s), std::move(v), rg);
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3, pad 1: center element is the full window sum") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 1);
  CHECK(y.at({0, 0, 1, 1}) == doctest::Approx(9).epsilon(1e-12));
  CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(4).epsilon(1e-12));
}

TEST_CASE("conv2d 1x1 identity kernel reproduces the input") {
  SplitMix64 rng(11);
  Tensor x = rand_tensor({1, 1, 4, 5}, rng);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d matches the direct 6-loop reference") {
  SplitMix64 rng(42);
  Tensor x = rand_tensor({1, 2, 5, 5}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng);
  Tensor b = rand_tensor({3}, rng);
  for (int pad : {0, 1}) {
    for (int stride : {1, 2}) {
      Tensor y = conv2d(x, w, b, stride, pad);
      const auto ref = oracle::conv2d_naive(x.impl->v, 1, 2, 5, 5, w.impl->v, 3,
                                            3, 3, b.impl->v, stride, pad);
      REQUIRE(y.numel() == static_cast<std::int64_t>(ref.size()));
      for (size_t i = 0; i < ref.size(); ++i)
        CHECK(oracle::rel_err(y.data()[i], ref[i]) < 1e-12);
    }
  }
}

TEST_CASE("conv2d rejects channel mismatches by axis") {
  Tensor x = Tensor::zeros({1, 3, 4, 4});
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  Tensor b = Tensor::zeros({2});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), ShapeError);
  Tensor b_bad = Tensor::zeros({3});
  Tensor w_ok = Tensor::zeros({2, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w_ok, b_bad, 1, 1), ShapeError);
}

TEST_CASE("maxpool2 basics and tie-breaking") {
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(maxpool2(x).item() == 4);

  // constant map: gradient lands on the first (top-left) cell of each window
  Tensor c = Tensor::full({1, 1, 4, 4}, 5, true);
  {
    Tape tape;
    Tensor y = maxpool2(c);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 5);
    tape.backward(sum_all(y));
  }
  const auto& g = c.grad();
  for (int y = 0; y < 4; ++y)
    for (int x2 = 0; x2 < 4; ++x2)
      CHECK(g[static_cast<size_t>(y * 4 + x2)] ==
            ((y % 2 == 0 && x2 % 2 == 0) ? 1 : 0));

  CHECK_THROWS_AS(maxpool2(Tensor::zeros({1, 1, 3, 4})), ShapeError);
}

TEST_CASE("maxpool2 random input matches brute-force window max") {
  SplitMix64 rng(7);
  Tensor x = rand_tensor({1, 1, 8, 8}, rng);
  Tensor y = maxpool2(x);
  const auto ref = oracle::maxpool2_naive(x.impl->v, 1, 1, 8, 8);
  for (size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == ref[i]);
}

TEST_CASE("fully_connected identity, arithmetic, and reference match") {
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  SplitMix64 rng(3);
  Tensor x = rand_tensor({3, 2}, rng);
  Tensor zb = Tensor::zeros({2});
  Tensor y = fully_connected(x, id, zb);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  Tensor v = Tensor::from({1, 2}, {1, 2});
  Tensor w = Tensor::from({2, 1}, {1, 1});
  Tensor b = Tensor::from({1}, {real(0.5)});
  CHECK(fully_connected(v, w, b).item() == doctest::Approx(3.5).epsilon(1e-15));

  Tensor a = rand_tensor({2, 4}, rng);
  Tensor m = rand_tensor({4, 3}, rng);
  Tensor bb = rand_tensor({3}, rng);
  Tensor out = fully_connected(a, m, bb);
  const auto ref = oracle::matmul_naive(a.impl->v, 2, 4, m.impl->v, 3, bb.impl->v);
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(oracle::rel_err(out.data()[i], ref[i]) < 1e-12);

  CHECK_THROWS_AS(fully_connected(a, Tensor::zeros({5, 3}), bb), ShapeError);
}

TEST_CASE("activation values") {
  Tensor x = Tensor::from({3}, {-1, 0, 2});
  Tensor r = relu(x);
  CHECK(r.data()[0] == 0);
  CHECK(r.data()[2] == 2);
  CHECK(sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5).epsilon(1e-15));

  // tanh'(0) = 1, against a central difference
  const double h = 1e-6;
  const double fd =
      (std::tanh(h) - std::tanh(-h)) / (2 * h);
  Tensor t = Tensor::scalar(0, true);
  {
    Tape tape;
    tape.backward(tanh(t));
  }
  CHECK(std::fabs(static_cast<double>(t.grad()[0]) - fd) < 1e-9);
  CHECK(t.grad()[0] == 1.0);
}

TEST_CASE("lstm_cell zero params give zero hidden state") {
  const int d = 3, hd = 4;
  LstmParams p;
  p.wx_i = Tensor::zeros({d, hd}); p.wh_i = Tensor::zeros({hd, hd}); p.b_i = Tensor::zeros({hd});
  p.wx_f = Tensor::zeros({d, hd}); p.wh_f = Tensor::zeros({hd, hd}); p.b_f = Tensor::zeros({hd});
  p.wx_o = Tensor::zeros({d, hd}); p.wh_o = Tensor::zeros({hd, hd}); p.b_o = Tensor::zeros({hd});
  p.wx_g = Tensor::zeros({d, hd}); p.wh_g = Tensor::zeros({hd, hd}); p.b_g = Tensor::zeros({hd});
  auto [h, c] = lstm_cell(Tensor::zeros({1, d}), Tensor::zeros({1, hd}),
                          Tensor::zeros({1, hd}), p);
  for (std::int64_t i = 0; i < h.numel(); ++i) CHECK(h.data()[i] == 0);
}

TEST_CASE("lstm_cell saturated gates carry the cell state through") {
  SplitMix64 rng(5);
  const int d = 3, hd = 4;
  LstmParams p;
  auto zeros = [&](Shape s) { return Tensor::zeros(std::move(s)); };
  p.wx_i = zeros({d, hd}); p.wh_i = zeros({hd, hd});
  p.b_i = Tensor::full({hd}, -10);  // input gate shut
  p.wx_f = zeros({d, hd}); p.wh_f = zeros({hd, hd});
  p.b_f = Tensor::full({hd}, 10);   // forget gate open
  p.wx_o = zeros({d, hd}); p.wh_o = zeros({hd, hd}); p.b_o = zeros({hd});
  p.wx_g = zeros({d, hd}); p.wh_g = zeros({hd, hd}); p.b_g = zeros({hd});
  Tensor x = rand_tensor({1, d}, rng);
  Tensor h0 = rand_tensor({1, hd}, rng, -0.5, 0.5);
  Tensor c0 = rand_tensor({1, hd}, rng, -0.5, 0.5);
  auto [h, c] = lstm_cell(x, h0, c0, p);
  for (std::int64_t i = 0; i < c.numel(); ++i)
    CHECK(std::fabs(static_cast<double>(c.data()[i] - c0.data()[i])) < 1e-4);
}

TEST_CASE("backward on a bare leaf gives gradient one") {
  Tensor x = Tensor::scalar(3, true);
  {
    Tape tape;
    tape.backward(x);
  }
  CHECK(x.grad()[0] == 1);
}

TEST_CASE("backward of sum(x*x) is 2x elementwise") {
  SplitMix64 rng(9);
  Tensor x = rand_tensor({2, 3}, rng, -2, 2, true);
  {
    Tape tape;
    tape.backward(sum_all(mul(x, x)));
  }
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[static_cast<size_t>(i)] ==
          doctest::Approx(2 * x.data()[i]).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::zeros({2, 2}, true);
  Tape tape;
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("two backward calls accumulate exactly twice the gradient") {
  SplitMix64 rng(13);
  Tensor x = rand_tensor({4}, rng, -1, 1, true);
  Tape tape;
  Tensor l = sum_all(mul(x, x));
  tape.backward(l);
  const std::vector<real> once = x.grad();
  tape.backward(l);
  for (size_t i = 0; i < once.size(); ++i)
    CHECK(x.grad()[i] == 2 * once[i]);
}

TEST_CASE("backward is linear: grad(a*f + b*g) = a*grad(f) + b*grad(g)") {
  SplitMix64 rng(17);
  Tensor x = rand_tensor({5}, rng, -1, 1, true);
  const real a = real(2.5), b = real(-1.25);

  auto grad_of = [&](const std::function<Tensor()>& f) {
    x.zero_grad();
    Tape tape;
    tape.backward(f());
    return x.grad();
  };
  auto f = [&] { return sum_all(mul(x, x)); };
  auto g = [&] { return sum_all(sin(x)); };
  const auto gf = grad_of(f);
  const auto gg = grad_of(g);
  const auto gsum = grad_of([&] {
    return add(linear_scale(f(), a, 0), linear_scale(g(), b, 0));
  });
  for (size_t i = 0; i < gf.size(); ++i)
    CHECK(gsum[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("forward replay is bit-identical") {
  SplitMix64 rng(23);
  Tensor x = rand_tensor({1, 2, 8, 8}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng);
  Tensor b = rand_tensor({3}, rng);
  Tensor y1 = maxpool2(relu(conv2d(x, w, b, 1, 1)));
  Tensor y2 = maxpool2(relu(conv2d(x, w, b, 1, 1)));
  for (std::int64_t i = 0; i < y1.numel(); ++i)
    CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("structural ops: reshape, concat, select, stack, spatial_mean") {
  SplitMix64 rng(29);
  Tensor a = rand_tensor({1, 2, 2, 2}, rng);
  Tensor b = rand_tensor({1, 1, 2, 2}, rng);
  Tensor cat = concat_channels({a, b});
  CHECK(cat.shape() == Shape{1, 3, 2, 2});
  CHECK(cat.at({0, 2, 1, 1}) == b.at({0, 0, 1, 1}));

  Tensor r = reshape(a, {4, 2});
  CHECK(r.shape() == Shape{4, 2});
  CHECK_THROWS_AS(reshape(a, {3, 3}), ShapeError);

  Tensor s = select(r, 5);
  CHECK(s.item() == r.data()[5]);
  CHECK_THROWS_AS(select(r, 99), ShapeError);

  Tensor st = stack_scalars({Tensor::scalar(1), Tensor::scalar(2)}, {2});
  CHECK(st.data()[1] == 2);

  Tensor m = spatial_mean(a);
  CHECK(m.shape() == Shape{1, 2});
  real want = 0;
  for (int i = 0; i < 4; ++i) want += a.data()[i];
  CHECK(m.data()[0] == doctest::Approx(want / 4).epsilon(1e-15));
}

TEST_CASE("per-primitive gradients match central differences") {
  const auto results = run_gradient_suite(101);
  for (const auto& r : results) {
    INFO(r.name, " max rel err ", r.max_rel_err);
    CHECK(r.pass());
  }
}
