#include "wsod/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "wsod/detector.hpp"
#include "wsod/evalmetrics.hpp"
#include "wsod/kernels.hpp"
#include "wsod/rng.hpp"

namespace wsod {

void validate(const TrainConfig& cfg) {
  require(cfg.gamma >= 0.0 && cfg.gamma <= 1.0, "gamma must lie in [0, 1]");
  require(cfg.k >= 2, "k must be >= 2");
  require(std::isfinite(cfg.epsilon) && cfg.epsilon != 0.0, "epsilon must be finite and non-zero");
  require(std::isfinite(cfg.eta) && cfg.eta > 0.0, "eta must be positive");
  require(std::isfinite(cfg.lambda) && cfg.lambda >= 0.0, "lambda must be non-negative");
  require(cfg.score_threshold >= 0.0 && cfg.score_threshold <= 1.0, "score_threshold must lie in [0, 1]");
  require(cfg.nms_iou >= 0.0 && cfg.nms_iou <= 1.0, "nms_iou must lie in [0, 1]");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.init_scale >= 0.0, "init_scale must be non-negative");
  require(std::isfinite(cfg.background_bias), "background_bias must be finite");
  require(cfg.noise_dim >= 1, "noise_dim must be >= 1");
}

DiscConfig disc_config(const TrainConfig& cfg) { return DiscConfig{cfg.gamma, LossConfig{cfg.lambda}}; }

ModelShape model_shape(const TrainConfig& cfg, std::size_t num_classes, std::size_t feature_dim) {
  return ModelShape{num_classes,    feature_dim,     cfg.noise_dim,    cfg.hidden,
                    cfg.init_scale, cfg.cond_hidden, cfg.noise_layout, cfg.background_bias};
}

PredParams initial_pred_params(const TrainConfig& cfg, std::size_t num_classes, std::size_t feature_dim) {
  return init_pred_params(model_shape(cfg, num_classes, feature_dim), cfg.seed * 2 + 1);
}

CondParams initial_cond_params(const TrainConfig& cfg, std::size_t num_classes, std::size_t feature_dim) {
  return init_cond_params(model_shape(cfg, num_classes, feature_dim), cfg.seed * 2 + 2);
}

std::size_t samples_per_image(const TrainConfig& cfg) { return cfg.pointwise_conditional ? 1 : cfg.k; }

double round_learning_rate(const TrainConfig& cfg, std::size_t round) {
  return std::ldexp(cfg.eta, -static_cast<int>(round > 0 ? round - 1 : 0));
}

NoiseVector draw_noise(std::size_t size, const NoiseKey& key, int image_id, std::size_t k) {
  auto rng = keyed_stream(StreamTag::kConditionalNoise,
                          {key.seed, key.round, key.pass, static_cast<std::uint64_t>(image_id), k});
  NoiseVector z;
  z.z.resize(size);
  for (double& v : z.z) v = uniform01(rng);
  return z;
}

ConditionalSamples sample_conditional(const CondParams& theta, const ImageSample& sample, std::size_t k,
                                      const NoiseKey& key, bool zero_noise, const SamplerOptions& options) {
  require(k >= 1, "need at least one conditional sample");
  require(!sample.annotation.required_classes().empty(), "conditional sampling needs a positive annotation");
  ConditionalSamples out;
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t size = noise_size(theta, sample.num_proposals());
    NoiseVector z = zero_noise ? NoiseVector{std::vector<double>(size, 0.0)} : draw_noise(size, key, sample.id, s);
    ScoreMatrix g = cond_forward(theta, sample, z);
    out.labelings.push_back(constrained_argmax(g, sample.annotation, options));
    out.noises.push_back(std::move(z));
    out.scores.push_back(std::move(g));
  }
  return out;
}

namespace {

std::vector<double> softmax_row(std::span<const double> row) {
  std::vector<double> p(row.begin(), row.end());
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

BoxLabeling postprocess_one(const BoxLabeling& y, const ScoreMatrix& g, const ImageAnnotation& annotation,
                            double score_threshold, double nms_iou) {
  const std::size_t b = y.size();
  std::vector<double> conf(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) conf[i] = softmax_row(g.row(i))[static_cast<std::size_t>(y.classes[i])];

  BoxLabeling out = y;
  auto to_background = [&](std::size_t i) {
    out.classes[i] = kBackground;
    out.boxes[i] = g.decoded_box(i, kBackground);
  };

  for (std::size_t i = 0; i < b; ++i) {
    if (out.classes[i] != kBackground && conf[i] < score_threshold) to_background(i);
  }

  std::map<int, std::vector<Detection>> by_class;
  for (std::size_t i = 0; i < b; ++i) {
    if (out.classes[i] == kBackground) continue;
    by_class[out.classes[i]].push_back({0, out.classes[i], out.boxes[i], conf[i], static_cast<int>(i)});
  }
  std::vector<char> keep(b, 0);
  for (auto& [cls, dets] : by_class) {
    for (const auto& d : nms(std::move(dets), nms_iou)) keep[static_cast<std::size_t>(d.local_index)] = 1;
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (out.classes[i] != kBackground && !keep[i]) to_background(i);
  }

  // restore the most confident box of any required class that lost all its boxes
  for (int j : annotation.required_classes()) {
    if (std::find(out.classes.begin(), out.classes.end(), j) != out.classes.end()) continue;
    std::size_t best = b;
    for (std::size_t i = 0; i < b; ++i) {
      if (y.classes[i] == j && (best == b || conf[i] > conf[best])) best = i;
    }
    if (best == b) continue;  // input labeling was already incompatible
    out.classes[best] = j;
    out.boxes[best] = y.boxes[best];
  }
  return out;
}

void check_finite(const HeadParams& head, const char* what, std::size_t step) {
  if (head.all_finite()) return;
  std::size_t bad = 0;
  for (double v : head.values()) bad += std::isfinite(v) ? 0 : 1;
  std::ostringstream msg;
  msg << what << ": " << bad << " non-finite entries of " << head.values().size() << " at step " << step;
  throw TrainingDiverged(msg.str());
}

}  // namespace

std::vector<BoxLabeling> postprocess_samples(const ConditionalSamples& samples, const ImageAnnotation& annotation,
                                             double score_threshold, double nms_iou) {
  require(samples.labelings.size() == samples.scores.size(), "samples and scores differ in count");
  std::vector<BoxLabeling> out;
  out.reserve(samples.labelings.size());
  for (std::size_t s = 0; s < samples.labelings.size(); ++s) {
    out.push_back(postprocess_one(samples.labelings[s], samples.scores[s], annotation, score_threshold, nms_iou));
  }
  return out;
}

BoxLabeling pred_labeling(const PredParams& theta, const ImageSample& sample) {
  const ClassDistribution p = pred_forward(theta, sample);
  BoxLabeling y;
  for (std::size_t i = 0; i < p.rows; ++i) {
    const auto row = p.row(i);
    const auto c = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    y.classes.push_back(static_cast<int>(c));
    y.boxes.push_back(p.decoded_box(i, c));
  }
  return y;
}

PredStepResult pred_step(const PredParams& theta, std::span<const ImageSample* const> batch,
                         std::span<const std::vector<BoxLabeling>* const> pseudo_gts, const TrainConfig& cfg,
                         double eta) {
  const PredBatchGradient g = pred_batch_gradient(theta, batch, pseudo_gts, cfg, cfg.execution);
  check_finite(g.gradient.head, "prediction gradient", 0);
  PredStepResult out{theta, g.objective};
  if (eta != 0.0) out.params.head.add_scaled(g.gradient.head, -eta);
  check_finite(out.params.head, "prediction parameters", 0);
  return out;
}

CondStepResult cond_step(const CondParams& theta, std::span<const ImageSample* const> batch,
                         std::span<const ClassDistribution* const> targets, const TrainConfig& cfg, double eta,
                         const NoiseKey& key) {
  const CondBatchGradient g = cond_batch_gradient(theta, batch, targets, cfg, key, cfg.execution);
  check_finite(g.gradient.head, "conditional gradient", 0);
  CondStepResult out{theta, g.cross, g.self_cond};
  if (eta != 0.0) out.params.head.add_scaled(g.gradient.head, -eta);
  check_finite(out.params.head, "conditional parameters", 0);
  return out;
}

namespace {

/// Batches of dataset positions for one epoch, shuffled from a keyed stream.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t round, std::uint64_t pass) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = keyed_stream(StreamTag::kBatchOrder, {seed, round, pass});
  // Fisher-Yates over 53-bit uniforms
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

DiversityReport mean_disc(const PredParams& pred, const std::vector<ImageSample>& dataset,
                          const std::vector<std::vector<BoxLabeling>>& pseudo, const TrainConfig& cfg) {
  DiversityReport total;
  const DiscConfig dc = disc_config(cfg);
  const double inv = 1.0 / static_cast<double>(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const ClassDistribution p = pred_forward(pred, dataset[i]);
    total.cross += div_pred_cond(p, pseudo[i], dc) * inv;
    total.self_pred += div_pred_pred(p, dc) * inv;
    if (pseudo[i].size() >= 2) total.self_cond += div_cond_cond(pseudo[i], dc, p.anchors) * inv;
  }
  total.disc = total.cross - dc.gamma * total.self_cond - (1.0 - dc.gamma) * total.self_pred;
  return total;
}

}  // namespace

TrainResult coordinate_descent(const std::vector<ImageSample>& dataset, std::size_t num_classes,
                               const TrainConfig& cfg, const TrainOptions& options) {
  validate(cfg);
  require(!dataset.empty(), "training set is empty");
  // training sees only proposals, features and annotations
  std::vector<ImageSample> weak = dataset;
  for (auto& img : weak) {
    img.ground_truth.reset();
    validate(img, num_classes);
    require(!img.annotation.required_classes().empty(), "training images need at least one positive class");
  }
  const std::size_t feature_dim = weak.front().feature_dim();

  TrainResult result;
  result.pred = options.initial_pred ? *options.initial_pred : initial_pred_params(cfg, num_classes, feature_dim);
  result.cond = options.initial_cond ? *options.initial_cond : initial_cond_params(cfg, num_classes, feature_dim);
  require(result.pred.feature_dim() == feature_dim && result.pred.num_classes() == num_classes,
          "prediction parameters do not match the dataset");
  require(result.cond.feature_dim() == feature_dim && result.cond.num_classes() == num_classes,
          "conditional parameters do not match the dataset");

  for (std::size_t round = options.completed_rounds + 1; round <= cfg.outer_rounds; ++round) {
    const auto started = std::chrono::steady_clock::now();
    const double eta = round_learning_rate(cfg, round);
    RoundMetrics m;
    m.round = round;

    // (a) prediction net fixed: its distributions are the conditional net's targets
    const std::vector<ClassDistribution> y_p = pred_distributions(result.pred, weak, cfg.execution);
    for (std::size_t epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      const NoiseKey key{cfg.seed, round, epoch};
      double cross = 0.0;
      double self = 0.0;
      for (const auto& batch_idx : epoch_batches(weak.size(), cfg.batch_size, cfg.seed, round, 2 * epoch)) {
        std::vector<const ImageSample*> batch;
        std::vector<const ClassDistribution*> labels;
        for (std::size_t i : batch_idx) {
          batch.push_back(&weak[i]);
          labels.push_back(&y_p[i]);
        }
        const CondStepResult step = cond_step(result.cond, batch, labels, cfg, eta, key);
        result.cond = step.params;
        cross += step.cross * static_cast<double>(batch.size());
        self += step.self_cond * static_cast<double>(batch.size());
      }
      m.cond_cross = cross / static_cast<double>(weak.size());
      m.cond_self = self / static_cast<double>(weak.size());
    }

    // (b) conditional net fixed: regenerate pseudo ground truth, train the prediction net
    const NoiseKey pseudo_key{cfg.seed, round, kPseudoLabelPass};
    const auto pseudo = pseudo_ground_truth(result.cond, weak, cfg, pseudo_key, cfg.execution);
    for (std::size_t epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      double objective = 0.0;
      for (const auto& batch_idx : epoch_batches(weak.size(), cfg.batch_size, cfg.seed, round, 2 * epoch + 1)) {
        std::vector<const ImageSample*> batch;
        std::vector<const std::vector<BoxLabeling>*> targets;
        for (std::size_t i : batch_idx) {
          batch.push_back(&weak[i]);
          targets.push_back(&pseudo[i]);
        }
        const PredStepResult step = pred_step(result.pred, batch, targets, cfg, eta);
        result.pred = step.params;
        objective += step.objective * static_cast<double>(batch.size());
      }
      m.pred_objective = objective / static_cast<double>(weak.size());
    }

    m.disc = mean_disc(result.pred, weak, pseudo, cfg);
    if (options.monitor != nullptr) {
      m.corloc = evaluate_model(result.pred, *options.monitor, DetectorOptions{}, cfg.execution).corloc.mean;
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.rounds.push_back(m);
    if (options.on_round) options.on_round(m, result.pred, result.cond);
  }
  return result;
}

}  // namespace wsod
