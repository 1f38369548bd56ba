#include "wsod/core.hpp"

#include <cmath>
#include <unordered_set>

#include "wsod/loss.hpp"

namespace wsod {

BoxGeometry BoxGeometry::from_corners(double x1, double y1, double x2, double y2) {
  return BoxGeometry{0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
}

void validate(const BoxGeometry& box) {
  require(std::isfinite(box.cx) && std::isfinite(box.cy), "box center must be finite");
  require(std::isfinite(box.w) && std::isfinite(box.h) && box.w > 0.0 && box.h > 0.0,
          "box width and height must be positive");
}

std::vector<int> ImageAnnotation::required_classes() const {
  std::vector<int> out;
  for (std::size_t j = 0; j < present.size(); ++j) {
    if (present[j] != 0) out.push_back(static_cast<int>(j) + 1);
  }
  return out;
}

ImageAnnotation ImageAnnotation::from_classes(std::size_t num_classes, std::span<const int> classes) {
  ImageAnnotation a;
  a.present.assign(num_classes, 0);
  for (int c : classes) {
    require(c >= 1 && static_cast<std::size_t>(c) <= num_classes, "annotation class out of range");
    a.present[c - 1] = 1;
  }
  return a;
}

BoxLabeling BoxLabeling::background(std::span<const BoxGeometry> anchors) {
  BoxLabeling y;
  y.classes.assign(anchors.size(), kBackground);
  y.boxes.assign(anchors.begin(), anchors.end());
  return y;
}

void validate(const BoxLabeling& labeling, std::size_t num_classes) {
  require(labeling.classes.size() == labeling.boxes.size(), "labeling classes and boxes differ in length");
  for (int c : labeling.classes) {
    require(c >= 0 && static_cast<std::size_t>(c) <= num_classes, "labeling class out of range");
  }
}

std::vector<BoxGeometry> ImageSample::anchors() const {
  std::vector<BoxGeometry> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) out.push_back(p.geometry);
  return out;
}

void validate(const ImageSample& sample, std::size_t num_classes) {
  require(sample.annotation.num_classes() == num_classes, "annotation length does not match class count");
  std::unordered_set<int> seen;
  const std::size_t dim = sample.feature_dim();
  for (const auto& p : sample.proposals) {
    require(p.index >= 0 && static_cast<std::size_t>(p.index) < sample.proposals.size(),
            "proposal index out of range");
    require(seen.insert(p.index).second, "duplicate proposal index");
    require(p.features.size() == dim, "proposal feature dimension is not uniform");
    validate(p.geometry);
  }
  if (sample.ground_truth) {
    std::vector<std::uint8_t> from_gt(num_classes, 0);
    for (const auto& gt : *sample.ground_truth) {
      require(gt.cls >= 1 && static_cast<std::size_t>(gt.cls) <= num_classes, "ground-truth class out of range");
      validate(gt.geometry);
      from_gt[gt.cls - 1] = 1;
    }
    require(from_gt == sample.annotation.present, "annotation disagrees with ground truth");
  }
}

PerClassTable::PerClassTable(std::size_t b, std::size_t c_plus_one)
    : rows(b),
      cols(c_plus_one),
      values(b * c_plus_one, 0.0),
      offsets(b * c_plus_one * 4, 0.0),
      anchors(b, kUnitFrame) {}

BoxGeometry PerClassTable::decoded_box(std::size_t i, std::size_t c) const {
  return box_decode(anchors[i], offset(i, c));
}

ScoreMatrix ScoreMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), "score matrix needs at least one row");
  ScoreMatrix g(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == g.cols, "ragged score rows");
    for (std::size_t c = 0; c < g.cols; ++c) g.at(i, c) = rows[i][c];
  }
  return g;
}

void validate(const ClassDistribution& dist, double tolerance) {
  require(dist.values.size() == dist.rows * dist.cols, "distribution shape mismatch");
  for (std::size_t i = 0; i < dist.rows; ++i) {
    double sum = 0.0;
    for (double p : dist.row(i)) {
      require(p >= 0.0 && p <= 1.0, "probability outside [0, 1]");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= tolerance, "distribution row does not sum to one");
  }
}

void validate(const ScoreMatrix& scores) {
  require(scores.values.size() == scores.rows * scores.cols, "score matrix shape mismatch");
  require(scores.anchors.size() == scores.rows, "score matrix anchor count mismatch");
  for (double v : scores.values) require(std::isfinite(v), "score matrix entry is not finite");
  for (double v : scores.offsets) require(std::isfinite(v), "score matrix offset is not finite");
}

bool is_compatible(std::span<const int> classes, const ImageAnnotation& annotation) {
  const std::size_t c = annotation.num_classes();
  std::vector<std::uint8_t> seen(c + 1, 0);
  for (int k : classes) {
    require(k >= 0 && static_cast<std::size_t>(k) <= c, "labeling class exceeds annotation width");
    seen[k] = 1;
  }
  for (std::size_t j = 0; j < c; ++j) {
    if (annotation.present[j] != 0 && seen[j + 1] == 0) return false;
  }
  return true;
}

bool is_compatible(const BoxLabeling& labeling, const ImageAnnotation& annotation) {
  return is_compatible(std::span<const int>(labeling.classes), annotation);
}

bool is_compatible(const BoxLabeling& labeling, const ImageAnnotation& annotation,
                   std::size_t num_classes) {
  require(annotation.num_classes() == num_classes, "annotation length does not match class count");
  return is_compatible(labeling, annotation);
}

std::optional<std::uint64_t> labeling_count(std::size_t num_boxes, std::size_t num_classes,
                                            std::uint64_t cap) {
  std::uint64_t total = 1;
  const std::uint64_t base = num_classes + 1;
  for (std::size_t i = 0; i < num_boxes; ++i) {
    if (total > cap / base) return std::nullopt;
    total *= base;
  }
  if (total > cap) return std::nullopt;
  return total;
}

LabelingEnumerator::LabelingEnumerator(std::size_t num_boxes, std::size_t num_classes,
                                       std::uint64_t cap)
    : num_classes_(num_classes), current_(num_boxes, 0) {
  const auto count = labeling_count(num_boxes, num_classes, cap);
  if (!count) {
    throw SizeError("labeling space (C+1)^B = " + std::to_string(num_classes + 1) + "^" +
                    std::to_string(num_boxes) + " exceeds enumeration cap " + std::to_string(cap));
  }
  total_ = *count;
}

std::optional<std::vector<int>> LabelingEnumerator::next() {
  if (emitted_ == total_) return std::nullopt;
  if (emitted_ > 0) {
    // odometer increment, last position fastest
    for (std::size_t pos = current_.size(); pos-- > 0;) {
      if (static_cast<std::size_t>(current_[pos]) < num_classes_) {
        ++current_[pos];
        break;
      }
      current_[pos] = 0;
    }
  }
  ++emitted_;
  return current_;
}

}  // namespace wsod
