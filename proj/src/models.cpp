#include "wsod/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wsod/loss.hpp"

namespace wsod {

void HeadParams::add_scaled(const HeadParams& other, double scale) {
  require(layout_ == other.layout_, "parameter layouts differ");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += scale * other.values_[k];
}

bool HeadParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void fill_uniform(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : out) v = dist(rng);
}

HeadParams init_head(const HeadLayout& layout, double init_scale, std::uint64_t seed) {
  HeadParams head(layout);
  std::mt19937_64 rng(seed);
  if (layout.hidden > 0) {
    const double glorot = std::sqrt(6.0 / static_cast<double>(layout.input_dim + layout.hidden));
    fill_uniform(head.hidden_weights(), glorot, rng);
  }
  fill_uniform(head.class_weights(), init_scale, rng);
  fill_uniform(head.offset_weights(), init_scale, rng);
  return head;
}

double dot(std::span<const double> w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
  return s;
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    z += x;
  }
  for (double& x : v) x /= z;
}

void check_features(const ImageSample& sample, std::size_t dim) {
  require(sample.num_proposals() >= 1, "image has no proposals");
  for (const auto& p : sample.proposals) {
    require(p.features.size() == dim, "feature dimension does not match the model");
  }
}

}  // namespace

PredParams init_pred_params(const ModelShape& shape, std::uint64_t seed) {
  PredParams p{init_head({shape.num_classes + 1, shape.feature_dim, shape.hidden}, shape.init_scale, seed)};
  p.head.class_bias()[kBackground] = shape.background_bias;
  return p;
}

CondParams init_cond_params(const ModelShape& shape, std::uint64_t seed) {
  CondParams p{
      init_head({shape.num_classes + 1, shape.feature_dim + shape.noise_dim, shape.cond_hidden}, shape.init_scale, seed),
      shape.noise_dim, shape.noise_layout};
  p.head.class_bias()[kBackground] = shape.background_bias;
  return p;
}

HeadActivations head_forward(const HeadParams& head, std::span<const double> input) {
  const HeadLayout& l = head.layout();
  require(input.size() == l.input_dim, "head input dimension mismatch");
  HeadActivations act;
  std::span<const double> feat = input;
  if (l.hidden > 0) {
    act.hidden.resize(l.hidden);
    const auto w = head.hidden_weights();
    const auto b = head.hidden_bias();
    for (std::size_t h = 0; h < l.hidden; ++h) {
      act.hidden[h] = std::tanh(dot(w.subspan(h * l.input_dim, l.input_dim), input) + b[h]);
    }
    feat = act.hidden;
  }
  const std::size_t f = l.feature_dim();
  act.logits.resize(l.classes);
  const auto cw = head.class_weights();
  const auto cb = head.class_bias();
  for (std::size_t c = 0; c < l.classes; ++c) act.logits[c] = dot(cw.subspan(c * f, f), feat) + cb[c];
  act.offsets.resize(l.classes * 4);
  const auto ow = head.offset_weights();
  const auto ob = head.offset_bias();
  for (std::size_t r = 0; r < l.classes * 4; ++r) act.offsets[r] = dot(ow.subspan(r * f, f), feat) + ob[r];
  return act;
}

void head_backward(const HeadParams& head, std::span<const double> input, const HeadActivations& act,
                   std::span<const double> d_logits, std::span<const double> d_offsets, HeadParams& grad) {
  const HeadLayout& l = head.layout();
  require(grad.layout() == l, "gradient layout mismatch");
  const std::size_t f = l.feature_dim();
  const std::span<const double> feat = l.hidden > 0 ? std::span<const double>(act.hidden) : input;
  std::vector<double> d_feat(l.hidden > 0 ? f : 0, 0.0);

  auto cw_grad = grad.class_weights();
  auto cb_grad = grad.class_bias();
  const auto cw = head.class_weights();
  for (std::size_t c = 0; c < l.classes; ++c) {
    const double g = d_logits[c];
    if (g == 0.0) continue;
    cb_grad[c] += g;
    for (std::size_t k = 0; k < f; ++k) cw_grad[c * f + k] += g * feat[k];
    for (std::size_t k = 0; k < d_feat.size(); ++k) d_feat[k] += g * cw[c * f + k];
  }
  if (!d_offsets.empty()) {
    auto ow_grad = grad.offset_weights();
    auto ob_grad = grad.offset_bias();
    const auto ow = head.offset_weights();
    for (std::size_t r = 0; r < l.classes * 4; ++r) {
      const double g = d_offsets[r];
      if (g == 0.0) continue;
      ob_grad[r] += g;
      for (std::size_t k = 0; k < f; ++k) ow_grad[r * f + k] += g * feat[k];
      for (std::size_t k = 0; k < d_feat.size(); ++k) d_feat[k] += g * ow[r * f + k];
    }
  }
  if (l.hidden > 0) {
    auto hw_grad = grad.hidden_weights();
    auto hb_grad = grad.hidden_bias();
    for (std::size_t h = 0; h < l.hidden; ++h) {
      const double pre = d_feat[h] * (1.0 - act.hidden[h] * act.hidden[h]);
      if (pre == 0.0) continue;
      hb_grad[h] += pre;
      for (std::size_t k = 0; k < l.input_dim; ++k) hw_grad[h * l.input_dim + k] += pre * input[k];
    }
  }
}

ClassDistribution pred_forward(const PredParams& theta, const ImageSample& sample) {
  check_features(sample, theta.feature_dim());
  const std::size_t b = sample.num_proposals();
  const std::size_t cols = theta.head.layout().classes;
  ClassDistribution out(b, cols);
  out.anchors = sample.anchors();
  for (std::size_t i = 0; i < b; ++i) {
    HeadActivations act = head_forward(theta.head, sample.proposals[i].features);
    softmax_inplace(act.logits);
    std::copy(act.logits.begin(), act.logits.end(), out.row(i).begin());
    std::copy(act.offsets.begin(), act.offsets.end(), out.offsets.begin() + static_cast<std::ptrdiff_t>(i * cols * 4));
  }
  return out;
}

std::vector<double> cond_input(std::span<const double> features, std::span<const double> z) {
  std::vector<double> in(features.begin(), features.end());
  in.insert(in.end(), z.begin(), z.end());
  return in;
}

std::size_t noise_size(const CondParams& theta, std::size_t b) {
  return theta.noise_layout == NoiseLayout::kPerProposal ? b * theta.noise_dim : theta.noise_dim;
}

ScoreMatrix cond_forward(const CondParams& theta, const ImageSample& sample, const NoiseVector& z) {
  check_features(sample, theta.feature_dim());
  require(z.z.size() == noise_size(theta, sample.num_proposals()), "noise dimension does not match the model");
  const std::size_t b = sample.num_proposals();
  const std::size_t cols = theta.head.layout().classes;
  ScoreMatrix out(b, cols);
  out.anchors = sample.anchors();
  for (std::size_t i = 0; i < b; ++i) {
    const auto in = cond_input(sample.proposals[i].features, z.slot(i, theta.noise_dim));
    const HeadActivations act = head_forward(theta.head, in);
    std::copy(act.logits.begin(), act.logits.end(), out.row(i).begin());
    std::copy(act.offsets.begin(), act.offsets.end(), out.offsets.begin() + static_cast<std::ptrdiff_t>(i * cols * 4));
  }
  return out;
}

void cond_backward(const CondParams& theta, const ImageSample& sample, const NoiseVector& z,
                   std::span<const double> d_scores, std::span<const double> d_offsets, CondParams& grad) {
  const std::size_t b = sample.num_proposals();
  const std::size_t cols = theta.head.layout().classes;
  require(d_scores.size() == b * cols, "score gradient shape mismatch");
  require(d_offsets.empty() || d_offsets.size() == b * cols * 4, "offset gradient shape mismatch");
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = d_scores.subspan(i * cols, cols);
    const auto orow = d_offsets.empty() ? std::span<const double>() : d_offsets.subspan(i * cols * 4, cols * 4);
    const bool any = std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; }) ||
                     std::any_of(orow.begin(), orow.end(), [](double v) { return v != 0.0; });
    if (!any) continue;
    const auto in = cond_input(sample.proposals[i].features, z.slot(i, theta.noise_dim));
    const HeadActivations act = head_forward(theta.head, in);
    head_backward(theta.head, in, act, row, orow, grad.head);
  }
}

CondParams cond_score_grad(const CondParams& theta, const ImageSample& sample, const NoiseVector& z,
                           const BoxLabeling& y) {
  const std::size_t b = sample.num_proposals();
  const std::size_t cols = theta.head.layout().classes;
  require(y.size() == b, "labeling length does not match the image");
  std::vector<double> d_scores(b * cols, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    require(y.classes[i] >= 0 && static_cast<std::size_t>(y.classes[i]) < cols, "labeling class out of range");
    d_scores[i * cols + static_cast<std::size_t>(y.classes[i])] = 1.0;
  }
  CondParams grad{HeadParams(theta.head.layout()), theta.noise_dim, theta.noise_layout};
  cond_backward(theta, sample, z, d_scores, {}, grad);
  return grad;
}

double cond_localization_loss(const CondParams& theta, const ImageSample& sample, const NoiseVector& z,
                              const BoxLabeling& selected, const BoxLabeling& target, double lambda) {
  const ScoreMatrix g = cond_forward(theta, sample, z);
  require(selected.size() == g.rows && target.size() == g.rows, "labeling length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < g.rows; ++i) {
    const int c = selected.classes[i];
    if (c == kBackground || c != target.classes[i]) continue;
    total += lambda * localization_loss(g.decoded_box(i, static_cast<std::size_t>(c)), target.boxes[i], g.anchors[i]);
  }
  return total;
}

void cond_localization_backward(const ScoreMatrix& g, const BoxLabeling& selected, const BoxLabeling& target,
                                double lambda, double scale, std::span<double> d_offsets) {
  require(d_offsets.size() == g.rows * g.cols * 4, "offset gradient shape mismatch");
  if (lambda == 0.0) return;
  for (std::size_t i = 0; i < g.rows; ++i) {
    const int c = selected.classes[i];
    if (c == kBackground || c != target.classes[i]) continue;
    const auto cc = static_cast<std::size_t>(c);
    const BoxDelta pred = box_encode(g.anchors[i], g.decoded_box(i, cc));
    const BoxDelta goal = box_encode(g.anchors[i], target.boxes[i]);
    // encode(anchor, decode(anchor, t)) == t, so d/d offset is the kernel derivative
    for (std::size_t t = 0; t < 4; ++t) {
      d_offsets[(i * g.cols + cc) * 4 + t] += scale * lambda * smooth_l1_derivative(pred[t] - goal[t]);
    }
  }
}

void cond_localization_backward(const ScoreMatrix& g, const BoxLabeling& selected, const ClassDistribution& target,
                                double lambda, double scale, std::span<double> d_offsets) {
  require(d_offsets.size() == g.rows * g.cols * 4, "offset gradient shape mismatch");
  require(target.rows == g.rows && target.cols == g.cols, "target distribution shape mismatch");
  if (lambda == 0.0) return;
  for (std::size_t i = 0; i < g.rows; ++i) {
    const int c = selected.classes[i];
    if (c == kBackground) continue;
    const auto cc = static_cast<std::size_t>(c);
    const double w = target.prob(i, cc);
    if (w == 0.0) continue;
    const BoxDelta pred = box_encode(g.anchors[i], g.decoded_box(i, cc));
    const BoxDelta goal = box_encode(g.anchors[i], target.decoded_box(i, cc));
    for (std::size_t t = 0; t < 4; ++t) {
      d_offsets[(i * g.cols + cc) * 4 + t] += scale * w * lambda * smooth_l1_derivative(pred[t] - goal[t]);
    }
  }
}

namespace {

/// Value of the prediction objective and its gradient with respect to the
/// probabilities and raw offsets of each proposal.
double pred_objective_terms(const ClassDistribution& p, std::span<const BoxLabeling> samples,
                            const DiscConfig& cfg, const PredObjectiveOptions& options,
                            std::vector<double>* d_probs, std::vector<double>* d_offsets) {
  validate(cfg);
  require(!samples.empty(), "prediction objective needs at least one conditional sample");
  const std::size_t b = p.rows;
  const std::size_t cols = p.cols;
  for (const auto& s : samples) require(s.size() == b && s.boxes.size() == b, "sample length mismatch");
  const double k = static_cast<double>(samples.size());
  const double inv_bk = 1.0 / (static_cast<double>(b) * k);
  const double inv_b = 1.0 / static_cast<double>(b);
  const double self_weight = options.use_self_diversity ? (1.0 - cfg.gamma) : 0.0;
  const double lambda = cfg.loss.lambda;

  double cross = 0.0;
  double self = 0.0;
  std::vector<LabeledBox> hyp(cols);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < cols; ++c) hyp[c] = {static_cast<int>(c), p.decoded_box(i, c)};
    for (const auto& s : samples) {
      const LabeledBox target{s.classes[i], s.boxes[i]};
      for (std::size_t c = 0; c < cols; ++c) {
        const double loss = delta_box(hyp[c], target, cfg.loss, p.anchors[i]);
        cross += p.prob(i, c) * loss;
        if (d_probs) (*d_probs)[i * cols + c] += inv_bk * loss;
      }
      const int sc = s.classes[i];
      if (d_offsets && sc != kBackground && lambda != 0.0) {
        const auto c = static_cast<std::size_t>(sc);
        const BoxDelta pred = box_encode(p.anchors[i], hyp[c].geometry);
        const BoxDelta goal = box_encode(p.anchors[i], target.geometry);
        for (std::size_t t = 0; t < 4; ++t) {
          (*d_offsets)[(i * cols + c) * 4 + t] += inv_bk * p.prob(i, c) * lambda * smooth_l1_derivative(pred[t] - goal[t]);
        }
      }
    }
    if (self_weight != 0.0) {
      // same-class pairs compare a box with itself, so only the class term survives
      for (std::size_t c = 0; c < cols; ++c) {
        double mixed = 0.0;
        for (std::size_t d = 0; d < cols; ++d) {
          const double loss = delta_box(hyp[c], hyp[d], cfg.loss, p.anchors[i]);
          self += p.prob(i, c) * p.prob(i, d) * loss;
          mixed += p.prob(i, d) * loss;
        }
        if (d_probs) (*d_probs)[i * cols + c] -= self_weight * inv_b * 2.0 * mixed;
      }
    }
  }
  return cross * inv_bk - self_weight * self * inv_b;
}

}  // namespace

ObjectiveWithGradient pred_objective_grad(const PredParams& theta, const ImageSample& sample,
                                          std::span<const BoxLabeling> samples, const DiscConfig& cfg,
                                          const PredObjectiveOptions& options) {
  const ClassDistribution p = pred_forward(theta, sample);
  const std::size_t b = p.rows;
  const std::size_t cols = p.cols;
  std::vector<double> d_probs(b * cols, 0.0);
  std::vector<double> d_offsets(b * cols * 4, 0.0);
  ObjectiveWithGradient out;
  out.value = pred_objective_terms(p, samples, cfg, options, &d_probs, &d_offsets);
  out.gradient = PredParams{HeadParams(theta.head.layout())};

  std::vector<double> d_logits(cols);
  for (std::size_t i = 0; i < b; ++i) {
    // softmax Jacobian: dL/dz_c = p_c (g_c - sum_d p_d g_d)
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += p.prob(i, c) * d_probs[i * cols + c];
    for (std::size_t c = 0; c < cols; ++c) d_logits[c] = p.prob(i, c) * (d_probs[i * cols + c] - mean);
    const auto& features = sample.proposals[i].features;
    const HeadActivations act = head_forward(theta.head, features);
    head_backward(theta.head, features, act, d_logits,
                  std::span<const double>(d_offsets).subspan(i * cols * 4, cols * 4), out.gradient.head);
  }
  return out;
}

double pred_objective(const PredParams& theta, const ImageSample& sample, std::span<const BoxLabeling> samples,
                      const DiscConfig& cfg, const PredObjectiveOptions& options) {
  const ClassDistribution p = pred_forward(theta, sample);
  return pred_objective_terms(p, samples, cfg, options, nullptr, nullptr);
}

}  // namespace wsod
