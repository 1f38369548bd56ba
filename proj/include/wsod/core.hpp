#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsod {

/// Raised when an operation's preconditions are violated by its caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an enumeration would exceed its configured cap.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Raised when an annotation requires more distinct classes than there are boxes.
class InfeasibleConstraint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

/// Axis-aligned box in center-size form, scene units.
struct BoxGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  bool operator==(const BoxGeometry&) const = default;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static BoxGeometry from_corners(double x1, double y1, double x2, double y2);
};

void validate(const BoxGeometry& box);

/// Background is class 0; foreground classes are 1..C.
inline constexpr int kBackground = 0;

struct Proposal {
  int index = 0;
  BoxGeometry geometry;
  std::vector<double> features;

  bool operator==(const Proposal&) const = default;
};

/// Image-level weak label: present[j - 1] is set iff foreground class j occurs.
struct ImageAnnotation {
  std::vector<std::uint8_t> present;

  bool operator==(const ImageAnnotation&) const = default;

  std::size_t num_classes() const { return present.size(); }
  bool has(int cls) const { return cls >= 1 && static_cast<std::size_t>(cls) <= present.size() && present[cls - 1] != 0; }
  /// Foreground classes that must appear, ascending.
  std::vector<int> required_classes() const;

  static ImageAnnotation from_classes(std::size_t num_classes, std::span<const int> classes);
};

/// Joint labeling of every proposal in one image.
struct BoxLabeling {
  std::vector<int> classes;
  std::vector<BoxGeometry> boxes;

  bool operator==(const BoxLabeling&) const = default;

  std::size_t size() const { return classes.size(); }
  static BoxLabeling background(std::span<const BoxGeometry> anchors);
};

void validate(const BoxLabeling& labeling, std::size_t num_classes);

struct GroundTruthBox {
  int cls = 1;
  BoxGeometry geometry;

  bool operator==(const GroundTruthBox&) const = default;
};

struct ImageSample {
  int id = 0;
  std::vector<Proposal> proposals;
  ImageAnnotation annotation;
  /// Evaluation-only; training code receives samples with this cleared.
  std::optional<std::vector<GroundTruthBox>> ground_truth;

  bool operator==(const ImageSample&) const = default;

  std::size_t num_proposals() const { return proposals.size(); }
  std::size_t feature_dim() const { return proposals.empty() ? 0 : proposals.front().features.size(); }
  std::vector<BoxGeometry> anchors() const;
};

/// Checks the sample-level invariants (unique indices, uniform feature
/// dimension, annotation agreeing with ground truth when present).
void validate(const ImageSample& sample, std::size_t num_classes);

/// Row-major B x (C+1) table with an attached B x (C+1) x 4 offset tensor.
/// Shared storage layout of ClassDistribution and ScoreMatrix.
struct PerClassTable {
  std::size_t rows = 0;
  std::size_t cols = 0;  // C + 1
  std::vector<double> values;
  std::vector<double> offsets;
  /// Proposal geometry that the offsets are relative to.
  std::vector<BoxGeometry> anchors;

  PerClassTable() = default;
  PerClassTable(std::size_t b, std::size_t c_plus_one);

  double& at(std::size_t i, std::size_t c) { return values[i * cols + c]; }
  double at(std::size_t i, std::size_t c) const { return values[i * cols + c]; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double, 4> offset(std::size_t i, std::size_t c) {
    return std::span<double, 4>(offsets.data() + (i * cols + c) * 4, 4);
  }
  std::span<const double, 4> offset(std::size_t i, std::size_t c) const {
    return std::span<const double, 4>(offsets.data() + (i * cols + c) * 4, 4);
  }
  std::size_t num_classes() const { return cols == 0 ? 0 : cols - 1; }

  /// Box regressed from anchor i by the offsets of class c.
  BoxGeometry decoded_box(std::size_t i, std::size_t c) const;
};

/// Factorized per-proposal class probabilities (rows sum to one).
struct ClassDistribution : PerClassTable {
  using PerClassTable::PerClassTable;
  double prob(std::size_t i, std::size_t c) const { return at(i, c); }
};

/// Per-proposal, per-class scores for one noise draw; column 0 is background.
struct ScoreMatrix : PerClassTable {
  using PerClassTable::PerClassTable;

  /// Builds a matrix from nested rows with zero offsets and unit anchors at the origin.
  static ScoreMatrix from_rows(const std::vector<std::vector<double>>& rows);
};

void validate(const ClassDistribution& dist, double tolerance = 1e-9);
void validate(const ScoreMatrix& scores);

/// True iff every class required by the annotation is assigned to some box.
bool is_compatible(std::span<const int> classes, const ImageAnnotation& annotation);
bool is_compatible(const BoxLabeling& labeling, const ImageAnnotation& annotation);
/// As above, additionally checking the annotation against the configured class count.
bool is_compatible(const BoxLabeling& labeling, const ImageAnnotation& annotation,
                   std::size_t num_classes);

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Lexicographic stream over {0..C}^B. Refuses to start when (C+1)^B > cap.
class LabelingEnumerator {
 public:
  LabelingEnumerator(std::size_t num_boxes, std::size_t num_classes,
                     std::uint64_t cap = kDefaultEnumerationCap);

  /// Next class vector, or nullopt once exhausted.
  std::optional<std::vector<int>> next();
  std::uint64_t total() const { return total_; }

 private:
  std::size_t num_classes_;
  std::uint64_t total_ = 0;
  std::uint64_t emitted_ = 0;
  std::vector<int> current_;
};

/// (C+1)^B, or nullopt on overflow past cap.
std::optional<std::uint64_t> labeling_count(std::size_t num_boxes, std::size_t num_classes,
                                            std::uint64_t cap);

}  // namespace wsod
