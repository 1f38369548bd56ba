#pragma once

#include <span>
#include <vector>

#include "wsod/core.hpp"
#include "wsod/loss.hpp"

namespace wsod {

struct DiscConfig {
  /// Weight of the conditional self-diversity; 1 - gamma weighs the prediction side.
  double gamma = 0.5;
  LossConfig loss;
};

void validate(const DiscConfig& cfg);

struct DiversityReport {
  double cross = 0.0;
  double self_cond = 0.0;
  double self_pred = 0.0;
  double disc = 0.0;
};

/// Cross diversity between the factorized prediction distribution (exact
/// expectation over classes per box) and K conditional samples.
double div_pred_cond(const ClassDistribution& p, std::span<const BoxLabeling> samples,
                     const DiscConfig& cfg);

/// Unbiased pairwise estimate of the conditional self-diversity; needs K >= 2.
/// `frames` supplies the per-proposal comparison frame (unit frame when empty).
double div_cond_cond(std::span<const BoxLabeling> samples, const DiscConfig& cfg,
                     std::span<const BoxGeometry> frames = {});

/// Closed-form self-diversity of the factorized prediction distribution.
double div_pred_pred(const ClassDistribution& p, const DiscConfig& cfg);

/// cross - gamma * self_cond - (1 - gamma) * self_pred.
DiversityReport disc(const ClassDistribution& p, std::span<const BoxLabeling> samples,
                     const DiscConfig& cfg);

}  // namespace wsod
