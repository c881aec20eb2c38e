// Independent reference implementations used to freeze expected test values.
// Everything here recomputes results with plain nested loops or generic linear
// algebra, never through the library's own forward/backward paths.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "drsan/tensor.hpp"

namespace oracle {

// direct 6-loop cross-correlation, accumulation over (c, kh, kw)
inline std::vector<drsan::real> conv2d_naive(
    const std::vector<drsan::real>& in, int n, int c, int h, int w,
    const std::vector<drsan::real>& wt, int k, int kh, int kw,
    const std::vector<drsan::real>& bias, int stride, int pad) {
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<drsan::real> out(static_cast<size_t>(n) * k * ho * wo);
  for (int ni = 0; ni < n; ++ni)
    for (int ki = 0; ki < k; ++ki)
      for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
          drsan::real acc = bias[static_cast<size_t>(ki)];
          for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int yy = y * stride + i - pad;
                const int xx = x * stride + j - pad;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                acc += wt[((static_cast<size_t>(ki) * c + ci) * kh + i) * kw + j] *
                       in[((static_cast<size_t>(ni) * c + ci) * h + yy) * w + xx];
              }
          out[((static_cast<size_t>(ni) * k + ki) * ho + y) * wo + x] = acc;
        }
  return out;
}

// brute-force 2x2 window max
inline std::vector<drsan::real> maxpool2_naive(const std::vector<drsan::real>& in,
                                               int n, int c, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  std::vector<drsan::real> out(static_cast<size_t>(n) * c * ho * wo);
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        drsan::real best = in[(static_cast<size_t>(p) * h + 2 * y) * w + 2 * x];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            best = std::max(best, in[(static_cast<size_t>(p) * h + 2 * y + dy) * w +
                                     2 * x + dx]);
        out[(static_cast<size_t>(p) * ho + y) * wo + x] = best;
      }
  return out;
}

// triple-loop matrix multiply plus bias row
inline std::vector<drsan::real> matmul_naive(const std::vector<drsan::real>& a,
                                             int n, int d,
                                             const std::vector<drsan::real>& b,
                                             int m,
                                             const std::vector<drsan::real>& bias) {
  std::vector<drsan::real> out(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      drsan::real acc = bias.empty() ? drsan::real(0) : bias[static_cast<size_t>(j)];
      for (int kk = 0; kk < d; ++kk)
        acc += a[static_cast<size_t>(i) * d + kk] * b[static_cast<size_t>(kk) * m + j];
      out[static_cast<size_t>(i) * m + j] = acc;
    }
  return out;
}

// Gaussian elimination with partial pivoting; used to invert augmented 3x3
// transforms independently of the closed-form path.
inline std::array<double, 9> solve_inverse3(const std::array<double, 9>& m) {
  std::array<double, 18> a{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[static_cast<size_t>(r * 6 + c)] = m[static_cast<size_t>(r * 3 + c)];
    a[static_cast<size_t>(r * 6 + 3 + r)] = 1.0;
  }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(a[static_cast<size_t>(r * 6 + col)]) >
          std::fabs(a[static_cast<size_t>(piv * 6 + col)]))
        piv = r;
    if (std::fabs(a[static_cast<size_t>(piv * 6 + col)]) < 1e-14)
      throw std::runtime_error("solve_inverse3: singular");
    if (piv != col)
      for (int c = 0; c < 6; ++c)
        std::swap(a[static_cast<size_t>(col * 6 + c)], a[static_cast<size_t>(piv * 6 + c)]);
    const double d = a[static_cast<size_t>(col * 6 + col)];
    for (int c = 0; c < 6; ++c) a[static_cast<size_t>(col * 6 + c)] /= d;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[static_cast<size_t>(r * 6 + col)];
      for (int c = 0; c < 6; ++c)
        a[static_cast<size_t>(r * 6 + c)] -= f * a[static_cast<size_t>(col * 6 + c)];
    }
  }
  std::array<double, 9> inv{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      inv[static_cast<size_t>(r * 3 + c)] = a[static_cast<size_t>(r * 6 + 3 + c)];
  return inv;
}

inline std::array<double, 9> augment(const std::array<double, 6>& theta) {
  return {theta[0], theta[1], theta[2], theta[3], theta[4], theta[5], 0, 0, 1};
}

inline std::array<double, 9> matmul3(const std::array<double, 9>& a,
                                     const std::array<double, 9>& b) {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int k = 0; k < 3; ++k)
        acc += a[static_cast<size_t>(r * 3 + k)] * b[static_cast<size_t>(k * 3 + c)];
      out[static_cast<size_t>(r * 3 + c)] = acc;
    }
  return out;
}

inline double rel_err(double got, double want) {
  const double scale = std::max({1.0, std::fabs(got), std::fabs(want)});
  return std::fabs(got - want) / scale;
}

}  // namespace oracle
