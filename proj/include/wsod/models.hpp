#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsod/core.hpp"
#include "wsod/diversity.hpp"

namespace wsod {

/// Shape of a per-proposal scoring head: an optional tanh hidden layer
/// followed by a (C+1)-way class layer and a (C+1)x4 box-offset layer.
struct HeadLayout {
  std::size_t classes = 0;    // C + 1
  std::size_t input_dim = 0;
  std::size_t hidden = 0;     // 0: heads read the input directly

  bool operator==(const HeadLayout&) const = default;

  std::size_t feature_dim() const { return hidden == 0 ? input_dim : hidden; }
  std::size_t hidden_weight_count() const { return hidden * input_dim; }
  std::size_t class_weight_count() const { return classes * feature_dim(); }
  std::size_t offset_weight_count() const { return classes * 4 * feature_dim(); }
  std::size_t parameter_count() const {
    return hidden_weight_count() + hidden + class_weight_count() + classes + offset_weight_count() + classes * 4;
  }
};

/// Flat parameter vector in block order: hidden weights, hidden bias, class
/// weights, class bias, offset weights, offset bias. All weight blocks are
/// row-major with one row per output unit.
class HeadParams {
 public:
  HeadParams() = default;
  explicit HeadParams(HeadLayout layout) : layout_(layout), values_(layout.parameter_count(), 0.0) {}

  const HeadLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> hidden_weights() { return block(0, layout_.hidden_weight_count()); }
  std::span<double> hidden_bias() { return block(hidden_bias_at(), layout_.hidden); }
  std::span<double> class_weights() { return block(class_weights_at(), layout_.class_weight_count()); }
  std::span<double> class_bias() { return block(class_bias_at(), layout_.classes); }
  std::span<double> offset_weights() { return block(offset_weights_at(), layout_.offset_weight_count()); }
  std::span<double> offset_bias() { return block(offset_bias_at(), layout_.classes * 4); }

  std::span<const double> hidden_weights() const { return block(0, layout_.hidden_weight_count()); }
  std::span<const double> hidden_bias() const { return block(hidden_bias_at(), layout_.hidden); }
  std::span<const double> class_weights() const { return block(class_weights_at(), layout_.class_weight_count()); }
  std::span<const double> class_bias() const { return block(class_bias_at(), layout_.classes); }
  std::span<const double> offset_weights() const { return block(offset_weights_at(), layout_.offset_weight_count()); }
  std::span<const double> offset_bias() const { return block(offset_bias_at(), layout_.classes * 4); }

  bool operator==(const HeadParams&) const = default;

  /// this += scale * other
  void add_scaled(const HeadParams& other, double scale);
  bool all_finite() const;

 private:
  std::size_t hidden_bias_at() const { return layout_.hidden_weight_count(); }
  std::size_t class_weights_at() const { return hidden_bias_at() + layout_.hidden; }
  std::size_t class_bias_at() const { return class_weights_at() + layout_.class_weight_count(); }
  std::size_t offset_weights_at() const { return class_bias_at() + layout_.classes; }
  std::size_t offset_bias_at() const { return offset_weights_at() + layout_.offset_weight_count(); }
  std::span<double> block(std::size_t at, std::size_t n) { return {values_.data() + at, n}; }
  std::span<const double> block(std::size_t at, std::size_t n) const { return {values_.data() + at, n}; }

  HeadLayout layout_;
  std::vector<double> values_;
};

/// Prediction-net parameters; inputs are the D proposal features.
struct PredParams {
  HeadParams head;

  std::size_t num_classes() const { return head.layout().classes - 1; }
  std::size_t feature_dim() const { return head.layout().input_dim; }
  bool operator==(const PredParams&) const = default;
};

/// How a noise draw reaches the proposals of an image: one Z-vector seen by
/// every proposal, or an independent Z-vector per proposal (a noise map).
enum class NoiseLayout : std::uint8_t { kShared = 0, kPerProposal = 1 };

/// Conditional-net parameters; inputs are D features followed by Z noise values.
struct CondParams {
  HeadParams head;
  std::size_t noise_dim = 0;
  NoiseLayout noise_layout = NoiseLayout::kShared;

  std::size_t num_classes() const { return head.layout().classes - 1; }
  std::size_t feature_dim() const { return head.layout().input_dim - noise_dim; }
  bool operator==(const CondParams&) const = default;
};

/// One noise draw for an image: Z values (shared layout) or B x Z values
/// (per-proposal layout, row-major).
struct NoiseVector {
  std::vector<double> z;
  bool operator==(const NoiseVector&) const = default;

  /// Noise seen by proposal i.
  std::span<const double> slot(std::size_t i, std::size_t dim) const {
    return z.size() == dim ? std::span<const double>(z) : std::span<const double>(z).subspan(i * dim, dim);
  }
};

/// Number of noise values one draw needs for an image with b proposals.
std::size_t noise_size(const CondParams& theta, std::size_t b);

struct ModelShape {
  std::size_t num_classes = 3;
  std::size_t feature_dim = 16;
  std::size_t noise_dim = 4;
  std::size_t hidden = 0;
  double init_scale = 0.01;
  std::size_t cond_hidden = 0;
  NoiseLayout noise_layout = NoiseLayout::kShared;
  /// Initial background logit bias of both heads.
  double background_bias = 0.0;
};

/// Weights uniform on [-init_scale, init_scale]; biases zero except the
/// background logit, which starts at background_bias. A hidden layer,
/// when present, uses a Glorot-uniform range so tanh is not saturated or flat.
PredParams init_pred_params(const ModelShape& shape, std::uint64_t seed);
CondParams init_cond_params(const ModelShape& shape, std::uint64_t seed);

/// Per-proposal activations retained for the backward pass.
struct HeadActivations {
  std::vector<double> hidden;   // post-tanh, empty for linear heads
  std::vector<double> logits;   // classes
  std::vector<double> offsets;  // classes x 4
};

HeadActivations head_forward(const HeadParams& head, std::span<const double> input);

/// Accumulates into `grad` the parameter gradient given the output
/// gradients. `d_offsets` may be empty (treated as zero).
void head_backward(const HeadParams& head, std::span<const double> input, const HeadActivations& act,
                   std::span<const double> d_logits, std::span<const double> d_offsets, HeadParams& grad);

/// Softmax over the class logits of each proposal; offsets are the raw head outputs.
ClassDistribution pred_forward(const PredParams& theta, const ImageSample& sample);

/// Class scores and offsets for one noise draw.
ScoreMatrix cond_forward(const CondParams& theta, const ImageSample& sample, const NoiseVector& z);

/// Backward pass of cond_forward for arbitrary score/offset gradients
/// (row-major B x (C+1) and B x (C+1) x 4; offsets may be empty).
void cond_backward(const CondParams& theta, const ImageSample& sample, const NoiseVector& z,
                   std::span<const double> d_scores, std::span<const double> d_offsets, CondParams& grad);

/// Gradient of sum_i G[i][y_i] with respect to every conditional parameter.
CondParams cond_score_grad(const CondParams& theta, const ImageSample& sample, const NoiseVector& z,
                           const BoxLabeling& y);

/// Regression pathway of the conditional net: lambda * sum_i smoothL1 between
/// the regressed box of the selected class and the target box, counted only
/// on proposals where `selected` and `target` agree on a foreground class.
/// Offsets of all other (proposal, class) pairs are masked out.
double cond_localization_loss(const CondParams& theta, const ImageSample& sample, const NoiseVector& z,
                              const BoxLabeling& selected, const BoxLabeling& target, double lambda);
void cond_localization_backward(const ScoreMatrix& g, const BoxLabeling& selected, const BoxLabeling& target,
                                double lambda, double scale, std::span<double> d_offsets);
/// Same pathway against a distribution: proposal i with selected class c is
/// pulled toward box_ic of the target, weighted by P[i][c].
void cond_localization_backward(const ScoreMatrix& g, const BoxLabeling& selected, const ClassDistribution& target,
                                double lambda, double scale, std::span<double> d_offsets);

struct PredObjectiveOptions {
  /// Subtract (1 - gamma) times the prediction self-diversity.
  bool use_self_diversity = true;
};

struct ObjectiveWithGradient {
  double value = 0.0;
  PredParams gradient;
};

/// Prediction-net objective for one image: cross diversity against the
/// given conditional samples minus (1 - gamma) * prediction self-diversity,
/// with its analytic gradient through the softmax and offset heads.
ObjectiveWithGradient pred_objective_grad(const PredParams& theta, const ImageSample& sample,
                                          std::span<const BoxLabeling> samples, const DiscConfig& cfg,
                                          const PredObjectiveOptions& options = {});

/// Objective value only (same definition as above).
double pred_objective(const PredParams& theta, const ImageSample& sample,
                      std::span<const BoxLabeling> samples, const DiscConfig& cfg,
                      const PredObjectiveOptions& options = {});

/// Conditional input vector: features followed by noise.
std::vector<double> cond_input(std::span<const double> features, std::span<const double> z);

}  // namespace wsod
