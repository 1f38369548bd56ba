#include "wsod/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "wsod/assignment.hpp"

namespace wsod {

double JointScore::value() const {
  require(value_.has_value(), "joint score of an incompatible labeling has no finite value");
  return *value_;
}

std::partial_ordering JointScore::operator<=>(const JointScore& other) const {
  if (!value_ && !other.value_) return std::partial_ordering::equivalent;
  if (!value_) return std::partial_ordering::less;
  if (!other.value_) return std::partial_ordering::greater;
  return *value_ <=> *other.value_;
}

namespace {

void check_dimensions(const ScoreMatrix& g, const ImageAnnotation& a) {
  require(g.cols >= 1, "score matrix has no class columns");
  require(a.num_classes() + 1 == g.cols, "annotation width does not match score matrix");
  require(g.values.size() == g.rows * g.cols, "score matrix shape mismatch");
  require(g.anchors.size() == g.rows, "score matrix anchor count mismatch");
}

double canonical_sum(const ScoreMatrix& g, std::span<const int> classes) {
  double s = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) s += g.at(i, static_cast<std::size_t>(classes[i]));
  return s;
}

/// True if (score_a, classes_a) beats (score_b, classes_b) under the shared tie-break.
bool better(double score_a, std::span<const int> a, double score_b, std::span<const int> b) {
  if (score_a != score_b) return score_a > score_b;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

struct RowMaxima {
  std::vector<int> argmax;
  std::vector<double> max;
};

RowMaxima row_maxima(const ScoreMatrix& g) {
  RowMaxima r{std::vector<int>(g.rows, 0), std::vector<double>(g.rows, 0.0)};
  for (std::size_t i = 0; i < g.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < g.cols; ++c) {
      if (g.at(i, c) > g.at(i, best)) best = c;
    }
    r.argmax[i] = static_cast<int>(best);
    r.max[i] = g.at(i, best);
  }
  return r;
}

std::vector<int> missing_classes(std::span<const int> classes, const ImageAnnotation& a) {
  std::vector<std::uint8_t> seen(a.num_classes() + 1, 0);
  for (int c : classes) seen[c] = 1;
  std::vector<int> out;
  for (int j : a.required_classes()) {
    if (!seen[j]) out.push_back(j);
  }
  return out;
}

/// Exhaustive matching over pruned candidates. For each required class only
/// proposals whose regret is within the |R|-th smallest (ties kept) can occur
/// in an optimal matching, so the search is tiny for small |R|.
std::vector<int> exhaustive_repair(const ScoreMatrix& g, const RowMaxima& rm,
                                   const std::vector<int>& required) {
  const std::size_t r = required.size();
  std::vector<std::vector<std::size_t>> candidates(r);
  for (std::size_t k = 0; k < r; ++k) {
    const auto j = static_cast<std::size_t>(required[k]);
    std::vector<double> regrets(g.rows);
    for (std::size_t i = 0; i < g.rows; ++i) regrets[i] = rm.max[i] - g.at(i, j);
    std::vector<double> sorted = regrets;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r - 1), sorted.end());
    const double cutoff = sorted[r - 1];
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (regrets[i] <= cutoff) candidates[k].push_back(i);
    }
  }

  std::vector<int> best;
  double best_score = 0.0;
  std::vector<int> trial = rm.argmax;
  std::vector<std::size_t> chosen(r, 0);
  std::vector<char> used(g.rows, 0);

  auto recurse = [&](auto&& self, std::size_t k) -> void {
    if (k == r) {
      for (std::size_t q = 0; q < r; ++q) trial[chosen[q]] = required[q];
      const double s = canonical_sum(g, trial);
      if (best.empty() || better(s, trial, best_score, best)) {
        best = trial;
        best_score = s;
      }
      for (std::size_t q = 0; q < r; ++q) trial[chosen[q]] = rm.argmax[chosen[q]];
      return;
    }
    for (std::size_t i : candidates[k]) {
      if (used[i]) continue;
      used[i] = 1;
      chosen[k] = i;
      self(self, k + 1);
      used[i] = 0;
    }
  };
  recurse(recurse, 0);
  return best;
}

/// Best labeling whose first `fixed` entries equal `prefix`: required classes
/// not yet covered are matched to the remaining proposals by minimum regret,
/// every other proposal takes its row argmax. Empty when infeasible.
std::vector<int> complete_by_matching(const ScoreMatrix& g, const RowMaxima& rm, std::span<const int> prefix,
                                      std::size_t fixed, const std::vector<int>& required) {
  std::vector<int> open;
  for (int j : required) {
    if (std::find(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(fixed), j) ==
        prefix.begin() + static_cast<std::ptrdiff_t>(fixed)) {
      open.push_back(j);
    }
  }
  const std::size_t rest = g.rows - fixed;
  if (open.size() > rest) return {};
  std::vector<int> out(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(fixed));
  out.insert(out.end(), rm.argmax.begin() + static_cast<std::ptrdiff_t>(fixed), rm.argmax.end());
  std::vector<double> cost(open.size() * rest);
  for (std::size_t k = 0; k < open.size(); ++k) {
    for (std::size_t i = 0; i < rest; ++i) {
      cost[k * rest + i] = rm.max[fixed + i] - g.at(fixed + i, static_cast<std::size_t>(open[k]));
    }
  }
  const auto assignment = hungarian_assign(cost, open.size(), rest);
  for (std::size_t k = 0; k < open.size(); ++k) out[fixed + assignment[k]] = open[k];
  return out;
}

/// Hungarian solve, then position by position the smallest class whose
/// optimal completion still reaches the best score.
std::vector<int> hungarian_repair(const ScoreMatrix& g, const RowMaxima& rm,
                                  const std::vector<int>& required) {
  std::vector<int> best = complete_by_matching(g, rm, {}, 0, required);
  double best_score = canonical_sum(g, best);
  for (std::size_t i = 0; i < g.rows; ++i) {
    std::vector<int> prefix(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(i + 1));
    for (int c = 0; c < best[i]; ++c) {
      prefix[i] = c;
      const std::vector<int> trial = complete_by_matching(g, rm, prefix, i + 1, required);
      if (trial.empty()) continue;
      const double s = canonical_sum(g, trial);
      if (better(s, trial, best_score, best)) {
        best = trial;
        best_score = s;
        break;
      }
    }
  }
  return best;
}

std::vector<int> heuristic_repair(const ScoreMatrix& g, const RowMaxima& rm,
                                  const std::vector<int>& missing) {
  std::vector<int> out = rm.argmax;
  std::vector<char> flipped(g.rows, 0);
  for (int j : missing) {
    std::size_t best = g.rows;
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (flipped[i]) continue;
      if (best == g.rows || g.at(i, static_cast<std::size_t>(j)) > g.at(best, static_cast<std::size_t>(j))) best = i;
    }
    out[best] = j;
    flipped[best] = 1;
  }
  return out;
}

}  // namespace

JointScore joint_score(const ScoreMatrix& g, std::span<const int> classes, const ImageAnnotation& a) {
  check_dimensions(g, a);
  require(classes.size() == g.rows, "labeling length does not match score matrix");
  for (int c : classes) require(c >= 0 && static_cast<std::size_t>(c) < g.cols, "labeling class out of range");
  if (!is_compatible(classes, a)) return JointScore::negative_infinity();
  return JointScore::finite(canonical_sum(g, classes));
}

JointScore joint_score(const ScoreMatrix& g, const BoxLabeling& y, const ImageAnnotation& a) {
  return joint_score(g, std::span<const int>(y.classes), a);
}

BoxLabeling decode_labeling(const ScoreMatrix& g, std::vector<int> classes) {
  BoxLabeling y;
  y.boxes.reserve(classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    y.boxes.push_back(g.decoded_box(i, static_cast<std::size_t>(classes[i])));
  }
  y.classes = std::move(classes);
  return y;
}

BoxLabeling constrained_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                               const SamplerOptions& options) {
  check_dimensions(g, a);
  const std::vector<int> required = a.required_classes();
  if (required.size() > g.rows) {
    throw InfeasibleConstraint("annotation requires " + std::to_string(required.size()) +
                               " classes but only " + std::to_string(g.rows) + " proposals exist");
  }
  const RowMaxima rm = row_maxima(g);
  const std::vector<int> missing = missing_classes(rm.argmax, a);
  if (missing.empty()) return decode_labeling(g, rm.argmax);

  if (options.mode == SamplerMode::kMaxScoreHeuristic) {
    return decode_labeling(g, heuristic_repair(g, rm, missing));
  }
  // present classes join the matching as well
  if (required.size() <= options.exhaustive_limit) {
    return decode_labeling(g, exhaustive_repair(g, rm, required));
  }
  return decode_labeling(g, hungarian_repair(g, rm, required));
}

BoxLabeling brute_force_argmax(const ScoreMatrix& g, const ImageAnnotation& a, std::uint64_t cap) {
  check_dimensions(g, a);
  if (a.required_classes().size() > g.rows) {
    throw InfeasibleConstraint("annotation requires more classes than proposals");
  }
  LabelingEnumerator stream(g.rows, g.cols - 1, cap);
  std::vector<int> best;
  double best_score = 0.0;
  while (auto y = stream.next()) {
    if (!is_compatible(*y, a)) continue;
    const double s = canonical_sum(g, *y);
    // lexicographic stream: keeping strictly greater scores keeps the smallest tie
    if (best.empty() || s > best_score) {
      best = *y;
      best_score = s;
    }
  }
  return decode_labeling(g, std::move(best));
}

ScoreMatrix loss_augmented_scores(const ScoreMatrix& g, const BoxLabeling& ref, double epsilon,
                                  const LossConfig& cfg) {
  require(ref.size() == g.rows && ref.boxes.size() == g.rows, "reference labeling length mismatch");
  require(std::isfinite(epsilon), "epsilon must be finite");
  ScoreMatrix out = g;
  if (epsilon == 0.0) return out;
  const double scale = epsilon / static_cast<double>(g.rows);
  for (std::size_t i = 0; i < g.rows; ++i) {
    const LabeledBox target{ref.classes[i], ref.boxes[i]};
    for (std::size_t j = 0; j < g.cols; ++j) {
      const LabeledBox hyp{static_cast<int>(j), g.decoded_box(i, j)};
      out.at(i, j) += scale * delta_box(hyp, target, cfg, g.anchors[i]);
    }
  }
  return out;
}

BoxLabeling loss_augmented_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                                  const BoxLabeling& ref, double epsilon, const LossConfig& cfg,
                                  const SamplerOptions& options) {
  check_dimensions(g, a);
  return constrained_argmax(loss_augmented_scores(g, ref, epsilon, cfg), a, options);
}

ScoreMatrix loss_augmented_scores(const ScoreMatrix& g, const ClassDistribution& ref, double epsilon,
                                  const LossConfig& cfg) {
  require(ref.rows == g.rows && ref.cols == g.cols, "reference distribution shape mismatch");
  require(std::isfinite(epsilon), "epsilon must be finite");
  ScoreMatrix out = g;
  if (epsilon == 0.0) return out;
  const double scale = epsilon / static_cast<double>(g.rows);
  for (std::size_t i = 0; i < g.rows; ++i) {
    for (std::size_t j = 0; j < g.cols; ++j) {
      const LabeledBox hyp{static_cast<int>(j), g.decoded_box(i, j)};
      double expected = 0.0;
      for (std::size_t c = 0; c < ref.cols; ++c) {
        const double p = ref.prob(i, c);
        if (p == 0.0) continue;
        expected += p * delta_box(hyp, {static_cast<int>(c), ref.decoded_box(i, c)}, cfg, g.anchors[i]);
      }
      out.at(i, j) += scale * expected;
    }
  }
  return out;
}

BoxLabeling loss_augmented_argmax(const ScoreMatrix& g, const ImageAnnotation& a,
                                  const ClassDistribution& ref, double epsilon, const LossConfig& cfg,
                                  const SamplerOptions& options) {
  check_dimensions(g, a);
  return constrained_argmax(loss_augmented_scores(g, ref, epsilon, cfg), a, options);
}

ClassDistribution point_mass(const BoxLabeling& y, std::span<const BoxGeometry> anchors, std::size_t cols) {
  require(y.size() == anchors.size() && y.boxes.size() == anchors.size(), "labeling and anchors differ in length");
  ClassDistribution p(y.size(), cols);
  p.anchors.assign(anchors.begin(), anchors.end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(y.classes[i]);
    require(c < cols, "labeling class out of range");
    p.at(i, c) = 1.0;
    const BoxDelta t = box_encode(anchors[i], y.boxes[i]);
    std::copy(t.begin(), t.end(), p.offset(i, c).begin());
  }
  return p;
}

}  // namespace wsod
