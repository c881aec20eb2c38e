#include "drsan/density.hpp"

#include <algorithm>
#include <cmath>

namespace drsan {

namespace {

// Snap to a multiple of 2^-40. Density cells stay far below 2^13, so sums of
// snapped values never round.
inline double quantize(double v) {
  return std::ldexp(static_cast<double>(std::llround(std::ldexp(v, 40))), -40);
}

}  // namespace

DensityMap generate_density(const Annotation& ann, double sigma) {
  if (sigma <= 0)
    throw std::invalid_argument("generate_density: sigma must be positive");
  if (ann.width <= 0 || ann.height <= 0)
    throw AnnotationError("generate_density: image '" + ann.image_id +
                          "' has empty extents");

  DensityMap map;
  map.h = ann.height;
  map.w = ann.width;
  map.scale = 1;
  map.v.assign(static_cast<size_t>(map.h) * map.w, 0.0);

  const double radius = 3.0 * sigma;
  const double r2 = radius * radius;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  std::vector<double> kernel;
  std::vector<size_t> cells;
  for (const auto& [x, y] : ann.points) {
    if (!(x >= 0.0 && x < ann.width && y >= 0.0 && y < ann.height))
      throw AnnotationError("generate_density: point (" + std::to_string(x) +
                            ", " + std::to_string(y) + ") outside image '" +
                            ann.image_id + "' (" + std::to_string(ann.width) +
                            "x" + std::to_string(ann.height) + ")");

    kernel.clear();
    cells.clear();
    const int x_lo = std::max(0, static_cast<int>(std::floor(x - radius)));
    const int x_hi = std::min(map.w - 1, static_cast<int>(std::ceil(x + radius)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(y - radius)));
    const int y_hi = std::min(map.h - 1, static_cast<int>(std::ceil(y + radius)));
    double total = 0.0;
    for (int cy = y_lo; cy <= y_hi; ++cy) {
      for (int cx = x_lo; cx <= x_hi; ++cx) {
        const double dx = cx - x, dy = cy - y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r2) continue;
        const double wv = std::exp(-d2 * inv2s2);
        kernel.push_back(wv);
        cells.push_back(static_cast<size_t>(cy) * map.w + cx);
        total += wv;
      }
    }
    if (cells.empty()) {
      // tiny sigma: the disk misses every cell center, fall back to the
      // nearest in-bounds cell
      const int cx = std::clamp(static_cast<int>(std::lround(x)), 0, map.w - 1);
      const int cy = std::clamp(static_cast<int>(std::lround(y)), 0, map.h - 1);
      kernel.push_back(1.0);
      cells.push_back(static_cast<size_t>(cy) * map.w + cx);
      total = 1.0;
    }
    for (size_t i = 0; i < cells.size(); ++i)
      map.v[cells[i]] += quantize(kernel[i] / total);
  }
  return map;
}

DensityMap downsample_sum(const DensityMap& map, int factor) {
  if (factor < 1)
    throw std::invalid_argument("downsample_sum: factor must be >= 1");
  if (map.h % factor != 0)
    throw ShapeError("downsample_sum: height " + std::to_string(map.h) +
                     " not divisible by " + std::to_string(factor));
  if (map.w % factor != 0)
    throw ShapeError("downsample_sum: width " + std::to_string(map.w) +
                     " not divisible by " + std::to_string(factor));
  if (factor == 1) return map;

  DensityMap out;
  out.h = map.h / factor;
  out.w = map.w / factor;
  out.scale = map.scale * factor;
  out.v.assign(static_cast<size_t>(out.h) * out.w, 0.0);
  for (int by = 0; by < out.h; ++by) {
    for (int bx = 0; bx < out.w; ++bx) {
      double s = 0.0;
      for (int y = by * factor; y < (by + 1) * factor; ++y)
        for (int x = bx * factor; x < (bx + 1) * factor; ++x)
          s += map.v[static_cast<size_t>(y) * map.w + x];
      out.v[static_cast<size_t>(by) * out.w + bx] = s;
    }
  }
  return out;
}

double sum_count(const DensityMap& map) {
  double s = 0.0;
  for (double v : map.v) s += v;
  return s;
}

}  // namespace drsan
