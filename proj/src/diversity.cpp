#include "wsod/diversity.hpp"

#include <cmath>

namespace wsod {

void validate(const DiscConfig& cfg) {
  require(cfg.gamma >= 0.0 && cfg.gamma <= 1.0, "gamma must lie in [0, 1]");
  validate(cfg.loss);
}

double div_pred_cond(const ClassDistribution& p, std::span<const BoxLabeling> samples,
                     const DiscConfig& cfg) {
  require(!samples.empty(), "div_pred_cond needs at least one conditional sample");
  const std::size_t b = p.rows;
  require(b >= 1, "div_pred_cond: empty distribution");
  for (const auto& s : samples) require(s.size() == b && s.boxes.size() == b, "sample length mismatch");

  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (const auto& s : samples) {
      const LabeledBox target{s.classes[i], s.boxes[i]};
      for (std::size_t c = 0; c < p.cols; ++c) {
        const double prob = p.prob(i, c);
        if (prob == 0.0) continue;
        total += prob * delta_box({static_cast<int>(c), p.decoded_box(i, c)}, target, cfg.loss, p.anchors[i]);
      }
    }
  }
  return total / (static_cast<double>(b) * static_cast<double>(samples.size()));
}

double div_cond_cond(std::span<const BoxLabeling> samples, const DiscConfig& cfg,
                     std::span<const BoxGeometry> frames) {
  const std::size_t k = samples.size();
  require(k >= 2, "div_cond_cond needs at least two samples");
  const std::size_t b = samples.front().size();
  require(b >= 1, "div_cond_cond: empty labeling");
  for (const auto& s : samples) require(s.size() == b && s.boxes.size() == b, "sample length mismatch");
  require(frames.empty() || frames.size() == b, "frame count mismatch");

  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t c = 0; c < k; ++c) {
      if (a == c) continue;
      for (std::size_t i = 0; i < b; ++i) {
        const BoxGeometry& frame = frames.empty() ? kUnitFrame : frames[i];
        total += delta_box({samples[a].classes[i], samples[a].boxes[i]},
                           {samples[c].classes[i], samples[c].boxes[i]}, cfg.loss, frame);
      }
    }
  }
  return total / (static_cast<double>(k) * static_cast<double>(k - 1) * static_cast<double>(b));
}

double div_pred_pred(const ClassDistribution& p, const DiscConfig& cfg) {
  require(p.rows >= 1, "div_pred_pred: empty distribution");
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    for (std::size_t c = 0; c < p.cols; ++c) {
      const double pc = p.prob(i, c);
      if (pc == 0.0) continue;
      const LabeledBox a{static_cast<int>(c), p.decoded_box(i, c)};
      for (std::size_t d = 0; d < p.cols; ++d) {
        const double pd = p.prob(i, d);
        if (pd == 0.0) continue;
        total += pc * pd * delta_box(a, {static_cast<int>(d), p.decoded_box(i, d)}, cfg.loss, p.anchors[i]);
      }
    }
  }
  return total / static_cast<double>(p.rows);
}

DiversityReport disc(const ClassDistribution& p, std::span<const BoxLabeling> samples,
                     const DiscConfig& cfg) {
  validate(cfg);
  DiversityReport r;
  r.cross = div_pred_cond(p, samples, cfg);
  r.self_cond = div_cond_cond(samples, cfg, p.anchors);
  r.self_pred = div_pred_pred(p, cfg);
  r.disc = r.cross - cfg.gamma * r.self_cond - (1.0 - cfg.gamma) * r.self_pred;
  return r;
}

}  // namespace wsod
