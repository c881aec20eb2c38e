#pragma once

#include <array>
#include <string>

#include "drsan/tensor.hpp"

namespace drsan {

// Constraint applied to the predicted transform. Translation keeps the
// identity linear part, TranslationScale adds axis-aligned scaling, Full adds
// rotation, Raw passes six unconstrained matrix entries straight through.
enum class TransformMode { Translation, TranslationScale, Full, Raw };

const char* mode_name(TransformMode m);
TransformMode mode_from_string(const std::string& s);  // t | ts | tsr | raw

// 2x3 matrix mapping normalized output coordinates to normalized source
// coordinates; both axes of a map span [-1,1].
struct AffineTransform {
  Tensor theta;  // [2,3]
  TransformMode mode = TransformMode::Raw;

  std::array<double, 6> entries() const;  // detached row-major copy
  double det() const;
};

inline constexpr double kDefaultScaleMin = 0.2;
inline constexpr double kMinAbsDet = 1e-6;

// Squashes raw predictor outputs into a valid transform. Structured modes read
// five scalars (scale x/y, angle, translation x/y): scale maps through a
// sigmoid onto [s_min,1], translation through tanh onto [-1,1], the angle is
// unbounded. Constrained entries are exact constants, not squashed values.
// Raw mode reads six scalars used directly as theta.
AffineTransform compose_transform(const Tensor& raw, TransformMode mode,
                                  double s_min = kDefaultScaleMin);

// Per-output-pixel source coordinates: grid[y][x] = theta * (xt, yt, 1) with
// (xt, yt) evenly spaced over [-1,1]^2, endpoints included.
Tensor affine_grid(const AffineTransform& t, int out_h, int out_w);

// Bilinear interpolation of map [C,H,W] at grid [h,w,2] source coordinates
// (align-corners). Out-of-bounds neighbors contribute zero. Differentiable in
// both map values and grid coordinates.
Tensor bilinear_sample(const Tensor& map, const Tensor& grid);

// Closed-form inverse; throws SingularTransformError when |det| < 1e-6.
AffineTransform invert_affine(const AffineTransform& t);

// Scatters a region-sized map back onto the full canvas by sampling through
// the inverted transform; zero outside the image of the attended region.
Tensor inverse_scatter(const Tensor& residual, const AffineTransform& t,
                       int out_h, int out_w);

}  // namespace drsan
