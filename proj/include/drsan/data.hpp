#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "drsan/density.hpp"

namespace drsan {

// Grayscale image with values in [0,1].
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
};

struct Sample {
  Image image;
  Annotation ann;
};

// Synthetic crowd scenes: elliptical head blobs whose size shrinks along a
// perspective axis, the whole scene rotated by a per-image angle so both the
// blob orientation and the size gradient depend on it.
struct SceneConfig {
  int height = 64;
  int width = 64;
  int count_min = 8;
  int count_max = 20;
  double radius_min = 2.0;
  double radius_max = 5.0;
  double perspective = 0.6;     // 0 = none, fraction of size lost at the far end
  double rotation_deg = 30.0;   // per-scene rotation drawn from +-this
  double noise = 0.02;          // background noise amplitude
  double aspect = 0.55;         // minor/major axis ratio of head blobs
  double min_separation = 1.0;  // centers at least this*(r1+r2) apart if possible
  std::uint64_t seed = 1;
};

std::vector<Sample> gen_synthetic(const SceneConfig& cfg, int count);

// Crops a random axis-aligned window whose side is a `frac_range` fraction of
// the source, keeps the points inside it, and resizes to out extents
// (bilinear image, scaled coordinates). A crop that strands every point is
// re-drawn up to 10 times, then accepted empty.
Sample augment_crop_resize(const Sample& s, double frac_lo, double frac_hi,
                           int out_h, int out_w, SplitMix64& rng);

// ---- persistence ----

void write_pgm(const Image& img, const std::string& path);
Image read_pgm(const std::string& path);

// One JSON document, top-level list of
// {"image": path, "width": w, "height": h, "points": [[x,y],...]}.
void save_annotations(const std::vector<Annotation>& anns,
                      const std::string& path);
std::vector<Annotation> load_annotations(const std::string& path);

// Writes images/NNN.pgm plus annotations.json under dir.
void save_dataset(const std::vector<Sample>& samples, const std::string& dir);
// Loads annotations.json and the images it references (paths are relative to
// the annotation file's directory).
std::vector<Sample> load_dataset(const std::string& annotations_path);

}  // namespace drsan
