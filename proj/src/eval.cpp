#include "drsan/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace drsan {

std::pair<double, double> metrics(
    const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty())
    throw std::invalid_argument("metrics: no ground-truth/estimate pairs");
  double abs_sum = 0, sq_sum = 0;
  for (const auto& [gt, est] : pairs) {
    const double e = gt - est;
    abs_sum += std::fabs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(pairs.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

EvalReport evaluate(const ModelParams& params, const std::vector<Sample>& samples,
                    int n, TransformMode mode, double sigma,
                    const std::vector<RoiMask>* rois) {
  if (samples.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  if (rois && rois->size() != samples.size())
    throw std::invalid_argument("evaluate: roi count does not match image count");

  const int mh = params.cfg.map_h(), mw = params.cfg.map_w();
  std::vector<EvalRow> rows(samples.size());
  parallel_for(static_cast<int>(samples.size()), [&](int i) {
    const Sample& s = samples[static_cast<size_t>(i)];
    const RoiMask* roi = rois ? &(*rois)[static_cast<size_t>(i)] : nullptr;
    if (roi && (roi->h != mh || roi->w != mw))
      throw ShapeError("evaluate: roi for '" + s.ann.image_id + "' is " +
                       std::to_string(roi->w) + "x" + std::to_string(roi->h) +
                       ", density maps are " + std::to_string(mw) + "x" +
                       std::to_string(mh));

    std::vector<real> px(s.image.v.begin(), s.image.v.end());
    const Tensor image =
        Tensor::from({1, 1, s.image.h, s.image.w}, std::move(px));
    const ForwardResult fwd = drsan_forward(image, params, n, mode);
    const DensityMap gt = downsample_sum(generate_density(s.ann, sigma), 8);

    double est = 0, gtc = 0;
    const real* pm = fwd.mn.data();
    for (int j = 0; j < mh * mw; ++j) {
      const double m = roi ? roi->v[static_cast<size_t>(j)] : 1.0;
      est += m * static_cast<double>(pm[j]);
      gtc += m * gt.v[static_cast<size_t>(j)];
    }
    rows[static_cast<size_t>(i)] = EvalRow{s.ann.image_id, gtc, est};
  });

  EvalReport report;
  report.rows = std::move(rows);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(report.rows.size());
  for (const EvalRow& r : report.rows) pairs.emplace_back(r.gt, r.est);
  std::tie(report.mae, report.mse) = metrics(pairs);
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::json doc;
  doc["mae"] = report.mae;
  doc["mse"] = report.mse;
  doc["n_images"] = report.rows.size();
  doc["per_image"] = nlohmann::json::array();
  for (const EvalRow& r : report.rows)
    doc["per_image"].push_back({{"id", r.id}, {"gt", r.gt}, {"est", r.est}});
  return doc.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-16s %12s %12s %12s\n", "image", "gt",
                "est", "error");
  os << line;
  for (const EvalRow& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-16s %12.3f %12.3f %12.3f\n",
                  r.id.c_str(), r.gt, r.est, r.est - r.gt);
    os << line;
  }
  std::snprintf(line, sizeof(line), "MAE %.4f  MSE %.4f  (%zu images)\n",
                report.mae, report.mse, report.rows.size());
  os << line;
  return os.str();
}

}  // namespace drsan
