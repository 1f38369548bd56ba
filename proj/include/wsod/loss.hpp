#pragma once

#include <array>
#include <span>

#include "wsod/core.hpp"

namespace wsod {

using BoxDelta = std::array<double, 4>;

struct LossConfig {
  /// Weight of the localization term relative to the 0-1 classification term.
  double lambda = 3.0;
};

void validate(const LossConfig& cfg);

/// Sum over components of 0.5 x^2 (|x| < 1) or |x| - 0.5.
double smooth_l1(std::span<const double, 4> d);
double smooth_l1(const BoxDelta& d);
/// Derivative of the scalar smooth-L1 kernel.
double smooth_l1_derivative(double x);

/// Regression target of `target` relative to `anchor`: (dx/w, dy/h, ln w', ln h').
BoxDelta box_encode(const BoxGeometry& anchor, const BoxGeometry& target);
BoxGeometry box_decode(const BoxGeometry& anchor, std::span<const double, 4> delta);
BoxGeometry box_decode(const BoxGeometry& anchor, const BoxDelta& delta);

/// The unit box at the origin, the default shared frame for geometry comparison.
inline constexpr BoxGeometry kUnitFrame{0.0, 0.0, 1.0, 1.0};

struct LabeledBox {
  int cls = kBackground;
  BoxGeometry geometry;
};

/// Localization discrepancy between two geometries, both encoded against `frame`.
double localization_loss(const BoxGeometry& a, const BoxGeometry& b,
                         const BoxGeometry& frame = kUnitFrame);

/// Per-box loss: [classes differ] + lambda * localization term. The
/// localization term is only active when both boxes carry the same
/// foreground class.
double delta_box(const LabeledBox& a, const LabeledBox& b, const LossConfig& cfg,
                 const BoxGeometry& frame = kUnitFrame);

/// Mean per-box loss over two labelings of the same proposals. When `frames`
/// is non-empty it supplies the shared comparison frame per proposal.
double delta_total(const BoxLabeling& a, const BoxLabeling& b, const LossConfig& cfg,
                   std::span<const BoxGeometry> frames = {});

}  // namespace wsod
