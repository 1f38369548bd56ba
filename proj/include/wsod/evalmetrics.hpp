#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include "wsod/core.hpp"

namespace wsod {

struct Detection {
  int image_id = 0;
  int cls = 1;  // foreground only
  BoxGeometry geometry;
  double score = 0.0;
  /// Position within the producing image; breaks score ties.
  int local_index = 0;
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const BoxGeometry& a, const BoxGeometry& b);

/// Greedy suppression: keep the best remaining detection, drop all with
/// IoU > threshold against it. Ties go to the lower local index. Output is
/// ordered by descending score.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

struct GroundTruthRef {
  int image_id = 0;
  BoxGeometry geometry;
};

/// Every-point interpolated average precision for one class. Detections are
/// ranked by descending score (ties: image id, then local index), each
/// matched to the unmatched ground truth of its image with the highest IoU at
/// or above the threshold. Returns nullopt when the class has no ground truth.
std::optional<double> average_precision(std::vector<Detection> dets, const std::vector<GroundTruthRef>& gts,
                                        double iou_threshold = 0.5);

/// Per (class, positive image): success iff the top-scoring detection of the
/// class in that image overlaps a ground truth of the class at IoU >= 0.5.
struct CorLocResult {
  std::vector<std::optional<double>> per_class;  // index j-1 for class j
  double mean = 0.0;
};

CorLocResult corloc(const std::vector<Detection>& dets, const std::vector<ImageSample>& images,
                    std::size_t num_classes, double iou_threshold = 0.5);

struct EvalReport {
  std::vector<std::optional<double>> ap;  // per class
  double map = 0.0;
  CorLocResult corloc;
};

/// Per-class AP plus mAP over classes that have ground truth, and CorLoc.
EvalReport evaluate_detections(const std::vector<Detection>& dets, const std::vector<ImageSample>& images,
                               std::size_t num_classes);

/// Comma-separated table with a header row and one data row:
/// ap_1..ap_C,map,corloc_1..corloc_C,corloc_mean. Absent values print as NA.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace wsod
