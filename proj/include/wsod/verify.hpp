#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "wsod/evalmetrics.hpp"

namespace wsod {

struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t sampler_instances = 1000;
  std::size_t gradient_instances = 100;
  std::size_t cond_cond_draws = 10'000;
  std::size_t pred_pred_draws = 100'000;
  std::size_t ap_instances = 100;
  /// Test fixture: negate every analytic gradient before comparing.
  bool flip_gradient_sign = false;
};

/// constrained_argmax against brute force on random instances (B <= 6, C <= 3,
/// scores uniform on [-5, 5]); error is the largest joint-score gap, and any
/// labeling mismatch fails the check.
CheckResult check_sampler_exactness(const VerifyOptions& options);

/// Central differences (step 1e-6) against pred_objective_grad. Error per
/// instance is ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf).
CheckResult check_pred_gradient(const VerifyOptions& options);
/// Same for cond_score_grad.
CheckResult check_cond_gradient(const VerifyOptions& options);

/// Noise restricted to a small finite set, mapped to labelings by the
/// conditional net and the sampler: Monte-Carlo mean of div_cond_cond
/// against the enumerated expectation (tolerance 1e-2).
CheckResult check_cond_self_diversity(const VerifyOptions& options);
/// Closed-form div_pred_pred against sampling from the factorized
/// distribution; error is |gap| in standard errors (tolerance 3).
CheckResult check_pred_self_diversity(const VerifyOptions& options);

/// average_precision against a prefix-by-prefix PR construction on random
/// mini-sets (<= 10 detections); any difference fails.
CheckResult check_average_precision(const VerifyOptions& options);
/// Two ground truths, detections TP, FP, TP: AP = 5/6.
CheckResult check_ap_hand_example();

/// Every-point AP recomputed from scratch for each ranked prefix.
double brute_force_average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruthRef>& gts,
                                     double iou_threshold = 0.5);

std::vector<CheckResult> run_all_checks(const VerifyOptions& options);

/// Comma-separated: check,instances,max_error,tolerance,status.
void write_check_table(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace wsod
