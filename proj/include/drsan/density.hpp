#pragma once

#include <string>
#include <utility>
#include <vector>

#include "drsan/common.hpp"

namespace drsan {

struct Annotation {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<std::pair<double, double>> points;  // (x, y) pixels, origin top-left
};

// Non-negative 2-D grid whose element sum is the represented person count.
// `scale` is the downsampling factor relative to the source image.
struct DensityMap {
  int h = 0;
  int w = 0;
  int scale = 1;
  std::vector<double> v;

  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// One isotropic Gaussian per point, truncated at radius 3*sigma and
// renormalized after truncation and border clipping so each kernel sums to
// exactly one count. Cell values are snapped to multiples of 2^-40, which
// keeps every later accumulation (map sums, block downsampling) exact in
// 64-bit arithmetic.
DensityMap generate_density(const Annotation& ann, double sigma);

// Sums factor x factor blocks; total sum unchanged.
DensityMap downsample_sum(const DensityMap& map, int factor);

double sum_count(const DensityMap& map);

}  // namespace drsan
