#include "wsod/loss.hpp"

#include <cmath>

namespace wsod {

void validate(const LossConfig& cfg) {
  require(std::isfinite(cfg.lambda) && cfg.lambda >= 0.0, "lambda must be finite and non-negative");
}

namespace {

double smooth_l1_scalar(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

}  // namespace

double smooth_l1(std::span<const double, 4> d) {
  double total = 0.0;
  for (double x : d) {
    require(std::isfinite(x), "smooth_l1 input is not finite");
    total += smooth_l1_scalar(x);
  }
  return total;
}

double smooth_l1(const BoxDelta& d) { return smooth_l1(std::span<const double, 4>(d)); }

double smooth_l1_derivative(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

BoxDelta box_encode(const BoxGeometry& anchor, const BoxGeometry& target) {
  require(anchor.w > 0.0 && anchor.h > 0.0 && target.w > 0.0 && target.h > 0.0,
          "box_encode needs positive dimensions");
  return {(target.cx - anchor.cx) / anchor.w, (target.cy - anchor.cy) / anchor.h,
          std::log(target.w / anchor.w), std::log(target.h / anchor.h)};
}

BoxGeometry box_decode(const BoxGeometry& anchor, std::span<const double, 4> delta) {
  return {anchor.cx + delta[0] * anchor.w, anchor.cy + delta[1] * anchor.h,
          anchor.w * std::exp(delta[2]), anchor.h * std::exp(delta[3])};
}

BoxGeometry box_decode(const BoxGeometry& anchor, const BoxDelta& delta) {
  return box_decode(anchor, std::span<const double, 4>(delta));
}

double localization_loss(const BoxGeometry& a, const BoxGeometry& b, const BoxGeometry& frame) {
  const BoxDelta ea = box_encode(frame, a);
  const BoxDelta eb = box_encode(frame, b);
  return smooth_l1(BoxDelta{ea[0] - eb[0], ea[1] - eb[1], ea[2] - eb[2], ea[3] - eb[3]});
}

double delta_box(const LabeledBox& a, const LabeledBox& b, const LossConfig& cfg,
                 const BoxGeometry& frame) {
  if (a.cls != b.cls) return 1.0;
  if (a.cls == kBackground || cfg.lambda == 0.0) return 0.0;
  return cfg.lambda * localization_loss(a.geometry, b.geometry, frame);
}

double delta_total(const BoxLabeling& a, const BoxLabeling& b, const LossConfig& cfg,
                   std::span<const BoxGeometry> frames) {
  require(a.size() == b.size(), "delta_total: labelings differ in length");
  require(a.size() >= 1, "delta_total: empty labeling");
  require(a.boxes.size() == a.size() && b.boxes.size() == b.size(), "delta_total: missing geometry");
  require(frames.empty() || frames.size() == a.size(), "delta_total: frame count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const BoxGeometry& frame = frames.empty() ? kUnitFrame : frames[i];
    sum += delta_box({a.classes[i], a.boxes[i]}, {b.classes[i], b.boxes[i]}, cfg, frame);
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace wsod
