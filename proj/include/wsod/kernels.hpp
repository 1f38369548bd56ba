#pragma once

#include <span>
#include <vector>

#include "wsod/models.hpp"
#include "wsod/trainer.hpp"

namespace wsod {

// Batch kernels. Each has a serial reference and an OpenMP version; both
// compute per-image contributions and reduce them in ascending image-id
// order, so they agree bit for bit.

struct PredBatchGradient {
  PredParams gradient;  // mean over the batch
  double objective = 0.0;
};

PredBatchGradient pred_batch_gradient(const PredParams& theta, std::span<const ImageSample* const> batch,
                                      std::span<const std::vector<BoxLabeling>* const> pseudo_gts,
                                      const TrainConfig& cfg, Execution exec);

struct CondImageGradient {
  CondParams gradient;
  double cross = 0.0;
  double self_cond = 0.0;
};

/// Gradient estimate for one image: K samples y_c, their loss-augmented
/// counterparts y_a against the prediction distribution, and the pairwise
/// loss-augmented samples y_b for the self-diversity term.
CondImageGradient cond_image_gradient(const CondParams& theta, const ImageSample& sample,
                                      const ClassDistribution& target, const TrainConfig& cfg, const NoiseKey& key);

struct CondBatchGradient {
  CondParams gradient;  // mean over the batch
  double cross = 0.0;
  double self_cond = 0.0;
};

CondBatchGradient cond_batch_gradient(const CondParams& theta, std::span<const ImageSample* const> batch,
                                      std::span<const ClassDistribution* const> targets, const TrainConfig& cfg,
                                      const NoiseKey& key, Execution exec);

/// Pseudo ground truth for every image (conditional sampling + post-processing).
std::vector<std::vector<BoxLabeling>> pseudo_ground_truth(const CondParams& theta,
                                                          const std::vector<ImageSample>& dataset,
                                                          const TrainConfig& cfg, const NoiseKey& key,
                                                          Execution exec);

/// Prediction distribution of every image.
std::vector<ClassDistribution> pred_distributions(const PredParams& theta, const std::vector<ImageSample>& dataset,
                                                  Execution exec);

}  // namespace wsod
