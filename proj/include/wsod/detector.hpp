#pragma once

#include <vector>

#include "wsod/evalmetrics.hpp"
#include "wsod/models.hpp"
#include "wsod/trainer.hpp"

namespace wsod {

struct DetectorOptions {
  double score_threshold = 0.0;
  double nms_iou = 0.3;
};

/// Every (proposal, foreground class) pair of the prediction net becomes a
/// detection scored by its softmax probability, placed at the regressed box.
/// Pairs below the threshold are dropped, then per-class NMS within the image.
std::vector<Detection> detect(const PredParams& theta, const ImageSample& sample, const DetectorOptions& options);

std::vector<Detection> detect_all(const PredParams& theta, const std::vector<ImageSample>& dataset,
                                  const DetectorOptions& options, Execution exec = Execution::kParallel);

/// Detections on images with ground truth, evaluated. Throws ContractViolation
/// when the parameters do not fit the dataset.
EvalReport evaluate_model(const PredParams& theta, const std::vector<ImageSample>& dataset,
                          const DetectorOptions& options, Execution exec = Execution::kParallel);

}  // namespace wsod
