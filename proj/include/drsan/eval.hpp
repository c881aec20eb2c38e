#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drsan/data.hpp"
#include "drsan/model.hpp"

namespace drsan {

struct EvalRow {
  std::string id;
  double gt = 0;
  double est = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mae = 0;
  double mse = 0;  // root of the mean squared count error
};

// (MAE, RMS error) over ground-truth/estimate pairs.
std::pair<double, double> metrics(const std::vector<std::pair<double, double>>& pairs);

// Optional per-image binary masks at density-map resolution; both the
// prediction and the pooled ground truth are masked before counting.
struct RoiMask {
  int h = 0;
  int w = 0;
  std::vector<double> v;  // 0 or 1
};

EvalReport evaluate(const ModelParams& params, const std::vector<Sample>& samples,
                    int n, TransformMode mode, double sigma,
                    const std::vector<RoiMask>* rois = nullptr);

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace drsan
