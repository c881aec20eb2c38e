#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace drsan {

#ifdef DRSAN_REAL32
using real = float;
#else
using real = double;
#endif

// Shape or contract violation on a tensor operation; the message names the
// offending axis.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

class SingularTransformError : public std::runtime_error {
 public:
  SingularTransformError(const std::string& msg, double det_value)
      : std::runtime_error(msg), det(det_value) {}
  double det;
};

class AnnotationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Project-wide deterministic RNG. State advances by the golden-ratio increment
// 0x9e3779b97f4a7c15; outputs are finalized with the two-round mixer constants
// 0xbf58476d1ce4e5b9 and 0x94d049bb133111eb. Streams are identical on every
// platform, which keeps generated datasets and initializations reproducible.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // (0,1], safe as a log() argument
  double uniform_pos() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0,n)
  int uniform_int(int n);
  // standard normal via Box-Muller (two uniforms per draw, no caching)
  double normal();
  // normal(0, sigma) with draws outside ±cutoff*sigma rejected
  double truncated_normal(double sigma, double cutoff);

 private:
  std::uint64_t state_;
};

// Worker threads for per-image parallel loops; DRSAN_THREADS caps the count.
int worker_count();
// fn(i) must only touch state owned by index i, so results are independent of
// the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace drsan
