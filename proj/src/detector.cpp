#include "wsod/detector.hpp"

#include <map>

namespace wsod {

std::vector<Detection> detect(const PredParams& theta, const ImageSample& sample, const DetectorOptions& options) {
  const ClassDistribution p = pred_forward(theta, sample);
  std::map<int, std::vector<Detection>> by_class;
  for (std::size_t i = 0; i < p.rows; ++i) {
    for (std::size_t c = 1; c < p.cols; ++c) {
      const double score = p.at(i, c);
      if (score < options.score_threshold) continue;
      by_class[static_cast<int>(c)].push_back(
          {sample.id, static_cast<int>(c), p.decoded_box(i, c), score, static_cast<int>(i)});
    }
  }
  std::vector<Detection> out;
  for (auto& [cls, dets] : by_class) {
    for (auto& d : nms(std::move(dets), options.nms_iou)) out.push_back(d);
  }
  return out;
}

std::vector<Detection> detect_all(const PredParams& theta, const std::vector<ImageSample>& dataset,
                                  const DetectorOptions& options, Execution exec) {
  std::vector<std::vector<Detection>> per_image(dataset.size());
  const auto n = static_cast<std::ptrdiff_t>(dataset.size());
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) per_image[i] = detect(theta, dataset[i], options);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) per_image[i] = detect(theta, dataset[i], options);
  }
  std::vector<Detection> out;
  for (auto& dets : per_image) out.insert(out.end(), dets.begin(), dets.end());
  return out;
}

EvalReport evaluate_model(const PredParams& theta, const std::vector<ImageSample>& dataset,
                          const DetectorOptions& options, Execution exec) {
  require(!dataset.empty(), "evaluation set is empty");
  for (const auto& img : dataset) {
    require(img.ground_truth.has_value(), "evaluation image " + std::to_string(img.id) + " has no ground truth");
    require(img.feature_dim() == theta.feature_dim(),
            "checkpoint expects " + std::to_string(theta.feature_dim()) + " features per proposal, image " +
                std::to_string(img.id) + " has " + std::to_string(img.feature_dim()));
    require(img.annotation.present.size() == theta.num_classes(),
            "checkpoint has " + std::to_string(theta.num_classes()) + " classes, dataset has " +
                std::to_string(img.annotation.present.size()));
  }
  return evaluate_detections(detect_all(theta, dataset, options, exec), dataset, theta.num_classes());
}

}  // namespace wsod
