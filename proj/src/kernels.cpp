#include "wsod/kernels.hpp"

#include <algorithm>
#include <numeric>

#include "wsod/loss.hpp"

namespace wsod {

namespace {

std::vector<std::size_t> order_by_id(std::span<const ImageSample* const> batch) {
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return batch[a]->id < batch[b]->id; });
  return order;
}

/// Runs body(slot) for slot in [0, n), in parallel when requested.
template <typename Body>
void for_each_slot(std::size_t n, Execution exec, Body&& body) {
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t s = 0; s < count; ++s) body(static_cast<std::size_t>(s));
  } else {
    for (std::ptrdiff_t s = 0; s < count; ++s) body(static_cast<std::size_t>(s));
  }
}

}  // namespace

PredBatchGradient pred_batch_gradient(const PredParams& theta, std::span<const ImageSample* const> batch,
                                      std::span<const std::vector<BoxLabeling>* const> pseudo_gts,
                                      const TrainConfig& cfg, Execution exec) {
  require(!batch.empty(), "empty batch");
  require(batch.size() == pseudo_gts.size(), "one pseudo ground truth set per image is required");
  const DiscConfig disc = disc_config(cfg);
  const PredObjectiveOptions options{cfg.use_pred_self_diversity};
  const auto order = order_by_id(batch);

  std::vector<ObjectiveWithGradient> per_image(batch.size());
  for_each_slot(batch.size(), exec, [&](std::size_t s) {
    const std::size_t b = order[s];
    per_image[s] = pred_objective_grad(theta, *batch[b], *pseudo_gts[b], disc, options);
  });

  PredBatchGradient out{PredParams{HeadParams(theta.head.layout())}, 0.0};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : per_image) {
    out.gradient.head.add_scaled(r.gradient.head, inv);
    out.objective += r.value * inv;
  }
  return out;
}

CondImageGradient cond_image_gradient(const CondParams& theta, const ImageSample& sample,
                                      const ClassDistribution& target, const TrainConfig& cfg, const NoiseKey& key) {
  const std::size_t k = samples_per_image(cfg);
  const SamplerOptions sampler{cfg.sampler};
  const ConditionalSamples cs = sample_conditional(theta, sample, k, key, cfg.pointwise_conditional, sampler);
  const LossConfig loss{cfg.lambda};
  const std::size_t b = sample.num_proposals();
  const std::size_t cols = theta.head.layout().classes;
  const auto anchors = sample.anchors();
  require(target.rows == b && target.cols == cols, "prediction target shape mismatch");
  const DiscConfig disc = disc_config(cfg);

  CondImageGradient out{CondParams{HeadParams(theta.head.layout()), theta.noise_dim, theta.noise_layout}, 0.0, 0.0};
  const double inv_eps = 1.0 / cfg.epsilon;
  const double cross_w = inv_eps / (static_cast<double>(k) * static_cast<double>(b));
  const bool self_term = !cfg.pointwise_conditional && k >= 2;
  const double self_w =
      self_term ? cfg.gamma * inv_eps * 2.0 / (static_cast<double>(k) * static_cast<double>(k - 1) * static_cast<double>(b))
                : 0.0;

  for (std::size_t s = 0; s < k; ++s) {
    const ScoreMatrix& g = cs.scores[s];
    const BoxLabeling& yc = cs.labelings[s];
    std::vector<double> d_scores(b * cols, 0.0);
    std::vector<double> d_offsets(b * cols * 4, 0.0);

    const BoxLabeling ya = loss_augmented_argmax(g, sample.annotation, target, cfg.epsilon, loss, sampler);
    for (std::size_t i = 0; i < b; ++i) {
      d_scores[i * cols + static_cast<std::size_t>(ya.classes[i])] += cross_w;
      d_scores[i * cols + static_cast<std::size_t>(yc.classes[i])] -= cross_w;
    }
    cond_localization_backward(g, yc, target, cfg.lambda, 1.0 / (static_cast<double>(k) * static_cast<double>(b)),
                               d_offsets);
    out.cross += div_pred_cond(target, std::span(&yc, 1), disc) / static_cast<double>(k);

    if (self_term) {
      for (std::size_t t = 0; t < k; ++t) {
        if (t == s) continue;
        const BoxLabeling& other = cs.labelings[t];
        const BoxLabeling yb = loss_augmented_argmax(g, sample.annotation, other, cfg.epsilon, loss, sampler);
        for (std::size_t i = 0; i < b; ++i) {
          d_scores[i * cols + static_cast<std::size_t>(yb.classes[i])] -= self_w;
          d_scores[i * cols + static_cast<std::size_t>(yc.classes[i])] += self_w;
        }
        out.self_cond += delta_total(yc, other, loss, anchors) /
                         (static_cast<double>(k) * static_cast<double>(k - 1));
      }
    }
    cond_backward(theta, sample, cs.noises[s], d_scores, d_offsets, out.gradient);
  }
  return out;
}

CondBatchGradient cond_batch_gradient(const CondParams& theta, std::span<const ImageSample* const> batch,
                                      std::span<const ClassDistribution* const> targets, const TrainConfig& cfg,
                                      const NoiseKey& key, Execution exec) {
  require(!batch.empty(), "empty batch");
  require(batch.size() == targets.size(), "one prediction target per image is required");
  const auto order = order_by_id(batch);
  std::vector<CondImageGradient> per_image(batch.size());
  for_each_slot(batch.size(), exec, [&](std::size_t s) {
    const std::size_t b = order[s];
    per_image[s] = cond_image_gradient(theta, *batch[b], *targets[b], cfg, key);
  });

  CondBatchGradient out{CondParams{HeadParams(theta.head.layout()), theta.noise_dim, theta.noise_layout}, 0.0,
                        0.0};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : per_image) {
    out.gradient.head.add_scaled(r.gradient.head, inv);
    out.cross += r.cross * inv;
    out.self_cond += r.self_cond * inv;
  }
  return out;
}

std::vector<std::vector<BoxLabeling>> pseudo_ground_truth(const CondParams& theta,
                                                          const std::vector<ImageSample>& dataset,
                                                          const TrainConfig& cfg, const NoiseKey& key,
                                                          Execution exec) {
  std::vector<std::vector<BoxLabeling>> out(dataset.size());
  const std::size_t k = samples_per_image(cfg);
  const SamplerOptions sampler{cfg.sampler};
  for_each_slot(dataset.size(), exec, [&](std::size_t i) {
    const auto cs = sample_conditional(theta, dataset[i], k, key, cfg.pointwise_conditional, sampler);
    out[i] = postprocess_samples(cs, dataset[i].annotation, cfg.score_threshold, cfg.nms_iou);
  });
  return out;
}

std::vector<ClassDistribution> pred_distributions(const PredParams& theta, const std::vector<ImageSample>& dataset,
                                                  Execution exec) {
  std::vector<ClassDistribution> out(dataset.size());
  for_each_slot(dataset.size(), exec, [&](std::size_t i) { out[i] = pred_forward(theta, dataset[i]); });
  return out;
}

}  // namespace wsod
