#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>

#include "wsod/core.hpp"
#include "wsod/loss.hpp"

namespace wsod {

/// Score of a joint labeling, or the tagged "incompatible" sentinel. The
/// sentinel never takes part in arithmetic.
class JointScore {
 public:
  static JointScore finite(double v) { return JointScore(v); }
  static JointScore negative_infinity() { return JointScore(); }

  bool is_finite() const { return value_.has_value(); }
  /// Contract violation when called on the sentinel.
  double value() const;

  std::partial_ordering operator<=>(const JointScore& other) const;
  bool operator==(const JointScore& other) const = default;

 private:
  JointScore() = default;
  explicit JointScore(double v) : value_(v) {}
  std::optional<double> value_;
};

/// Sum of the selected scores in proposal order when the labeling satisfies
/// the annotation, the sentinel otherwise.
JointScore joint_score(const ScoreMatrix& g, std::span<const int> classes, const ImageAnnotation& a);
JointScore joint_score(const ScoreMatrix& g, const BoxLabeling& y, const ImageAnnotation& a);

enum class SamplerMode {
  /// Row argmax repaired by a minimum-regret matching of required classes.
  kExact,
  /// Flip the highest-scoring proposal for each missing class; not always optimal.
  kMaxScoreHeuristic,
};

struct SamplerOptions {
  SamplerMode mode = SamplerMode::kExact;
  /// Largest number of classes to match by exhaustive search before
  /// switching to the Hungarian solver.
  std::size_t exhaustive_limit = 3;
};

/// Exact argmax of the joint score over labelings compatible with `a`.
/// Ties resolve to the lexicographically smallest class vector (lowest
/// proposal index first, then lowest class index). Box geometry is decoded
/// from the offsets of the chosen class.
BoxLabeling constrained_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                               const SamplerOptions& options = {});

/// Exhaustive reference for constrained_argmax, same tie-break.
BoxLabeling brute_force_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                               std::uint64_t cap = kDefaultEnumerationCap);

/// G'[i][j] = G[i][j] + (epsilon / B) * delta_box((j, box_ij), ref_i). Offsets
/// and anchors are carried over unchanged.
ScoreMatrix loss_augmented_scores(const ScoreMatrix& g, const BoxLabeling& ref, double epsilon,
                                  const LossConfig& cfg);

/// argmax over compatible y of S(y) + epsilon * Delta(y, ref).
BoxLabeling loss_augmented_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                                  const BoxLabeling& ref, double epsilon, const LossConfig& cfg,
                                  const SamplerOptions& options = {});

/// Reference given as a factorized distribution: the augmentation is the
/// expected per-box loss, sum_c P[i][c] * delta_box((j, box_ij), (c, box_ic)).
ScoreMatrix loss_augmented_scores(const ScoreMatrix& g, const ClassDistribution& ref, double epsilon,
                                  const LossConfig& cfg);
BoxLabeling loss_augmented_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                                  const ClassDistribution& ref, double epsilon, const LossConfig& cfg,
                                  const SamplerOptions& options = {});

/// One-hot distribution concentrated on y, with offsets that regress each
/// anchor onto the box of y.
ClassDistribution point_mass(const BoxLabeling& y, std::span<const BoxGeometry> anchors, std::size_t cols);

/// Attaches decoded geometry to a class vector.
BoxLabeling decode_labeling(const ScoreMatrix& g, std::vector<int> classes);

}  // namespace wsod
