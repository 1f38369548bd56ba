#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsod/core.hpp"
#include "wsod/diversity.hpp"
#include "wsod/models.hpp"
#include "wsod/sampler.hpp"

namespace wsod {

/// Non-finite gradient or parameter during training.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Execution { kSerial, kParallel };

struct TrainConfig {
  double gamma = 0.5;
  std::size_t k = 5;
  /// Negative values push samples towards high-loss labelings.
  double epsilon = -20.0;
  /// Initial learning rate, halved after every outer round.
  double eta = 10.0;
  double lambda = 3.0;
  double score_threshold = 0.2;
  double nms_iou = 0.3;
  std::size_t outer_rounds = 6;
  std::size_t inner_epochs = 5;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;

  std::size_t noise_dim = 4;
  /// Hidden tanh units of the prediction and conditional heads (0: linear).
  std::size_t hidden = 0;
  std::size_t cond_hidden = 0;
  NoiseLayout noise_layout = NoiseLayout::kPerProposal;
  double init_scale = 0.01;
  double background_bias = 3.0;

  /// Ablation switches. A pointwise conditional net draws one sample from
  /// the zero noise vector and drops its self-diversity term.
  bool use_pred_self_diversity = true;
  bool pointwise_conditional = false;

  SamplerMode sampler = SamplerMode::kExact;
  Execution execution = Execution::kParallel;
};

/// Throws ContractViolation naming the offending field.
void validate(const TrainConfig& cfg);
DiscConfig disc_config(const TrainConfig& cfg);
ModelShape model_shape(const TrainConfig& cfg, std::size_t num_classes, std::size_t feature_dim);
/// Parameters before any training: seeds 2s+1 (prediction) and 2s+2 (conditional).
PredParams initial_pred_params(const TrainConfig& cfg, std::size_t num_classes, std::size_t feature_dim);
CondParams initial_cond_params(const TrainConfig& cfg, std::size_t num_classes, std::size_t feature_dim);
/// Samples drawn per image: 1 for a pointwise conditional net, K otherwise.
std::size_t samples_per_image(const TrainConfig& cfg);
/// Learning rate used during 1-based outer round `round`.
double round_learning_rate(const TrainConfig& cfg, std::size_t round);

/// Identifies one batch of noise draws: (seed, round, pass); each image and
/// sample index then gets its own stream, independent of thread scheduling.
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint64_t round = 0;
  std::uint64_t pass = 0;
};

/// Pass number reserved for pseudo-ground-truth generation.
inline constexpr std::uint64_t kPseudoLabelPass = 1u << 20;

/// `size` values i.i.d. uniform on [0, 1] from the stream of (key, image, k).
NoiseVector draw_noise(std::size_t size, const NoiseKey& key, int image_id, std::size_t k);

struct ConditionalSamples {
  std::vector<BoxLabeling> labelings;
  std::vector<NoiseVector> noises;
  std::vector<ScoreMatrix> scores;
};

/// K independent noise draws, each scored by the conditional net and decoded
/// by the exact constrained argmax. With `zero_noise` every draw is the zero vector.
ConditionalSamples sample_conditional(const CondParams& theta, const ImageSample& sample, std::size_t k,
                                      const NoiseKey& key, bool zero_noise = false,
                                      const SamplerOptions& options = {});

/// Pseudo ground truth from conditional samples: foreground boxes whose
/// softmax score for their class is below the threshold become background,
/// then per-class NMS. A required class left without any box gets its
/// highest-scoring box back, so every output stays compatible.
std::vector<BoxLabeling> postprocess_samples(const ConditionalSamples& samples, const ImageAnnotation& annotation,
                                             double score_threshold, double nms_iou);

/// Per-proposal argmax of the prediction distribution with regressed boxes.
BoxLabeling pred_labeling(const PredParams& theta, const ImageSample& sample);

struct PredStepResult {
  PredParams params;
  double objective = 0.0;
};

/// One SGD step on the prediction net over a batch (mean of per-image objectives).
PredStepResult pred_step(const PredParams& theta, std::span<const ImageSample* const> batch,
                         std::span<const std::vector<BoxLabeling>* const> pseudo_gts, const TrainConfig& cfg,
                         double eta);

struct CondStepResult {
  CondParams params;
  double cross = 0.0;      // mean expected Delta(y_p, y_c^k)
  double self_cond = 0.0;  // mean pairwise Delta between samples
};

/// One direct-loss-minimization step on the conditional net against the
/// fixed prediction distributions (one per batch image). The loss is the
/// expected Delta under the prediction distribution; a point_mass target
/// gives the single-labeling form.
CondStepResult cond_step(const CondParams& theta, std::span<const ImageSample* const> batch,
                         std::span<const ClassDistribution* const> targets, const TrainConfig& cfg, double eta,
                         const NoiseKey& key);

struct RoundMetrics {
  std::size_t round = 0;
  double cond_cross = 0.0;
  double cond_self = 0.0;
  double pred_objective = 0.0;
  DiversityReport disc;
  std::optional<double> corloc;
  double wall_seconds = 0.0;
};

struct TrainResult {
  PredParams pred;
  CondParams cond;
  std::vector<RoundMetrics> rounds;
};

struct TrainOptions {
  /// Images with ground truth used only for per-round CorLoc monitoring.
  const std::vector<ImageSample>* monitor = nullptr;
  /// Resume from these parameters after `completed_rounds` rounds.
  std::optional<PredParams> initial_pred;
  std::optional<CondParams> initial_cond;
  std::size_t completed_rounds = 0;
  std::function<void(const RoundMetrics&, const PredParams&, const CondParams&)> on_round;
};

/// Alternating optimization: per outer round, fix the prediction net and
/// train the conditional net, then regenerate pseudo ground truth and train
/// the prediction net. Ground truth on `dataset` is never read.
TrainResult coordinate_descent(const std::vector<ImageSample>& dataset, std::size_t num_classes,
                               const TrainConfig& cfg, const TrainOptions& options = {});

}  // namespace wsod
