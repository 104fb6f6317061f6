#pragma once

#include <array>
#include <span>

namespace appledet::boxloss {

enum ClassId : int { kApple = 0, kBlock = 1 };
inline constexpr int kNumClasses = 2;

/// Axis-aligned box in center form. The unit (pixels, normalized, grid cells)
/// is whatever the caller uses consistently.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  int class_id = kApple;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }

  static Box from_corners(double x1, double y1, double x2, double y2, int class_id = kApple);
  Box scaled(double sx, double sy) const;

  bool operator==(const Box&) const = default;
};

struct GroundTruth {
  Box box;
  int image_id = 0;
};

struct Detection {
  Box box;
  double confidence = 0.0;
  int image_id = 0;
};

/// |A ∩ B| / |A ∪ B|, 0 for disjoint or degenerate boxes.
double iou(const Box& a, const Box& b);

enum class CiouForm {
  squared,     // 1 - IoU + (d / c)^2 + alpha v
  unsquared,  // 1 - IoU + d / c + alpha v, unsquared distance ratio
};

enum class AlphaMode {
  constant,        // alpha held fixed in the gradient
  differentiable,  // alpha differentiated like every other term
};

struct CiouTerms {
  double iou = 0.0;
  double distance_ratio = 0.0;  // d / c, center distance over enclosing diagonal
  double v = 0.0;
  double alpha = 0.0;
  double loss = 0.0;
};

CiouTerms ciou_terms(const Box& pred, const Box& gt, CiouForm form);
double ciou_loss(const Box& pred, const Box& gt, CiouForm form);

struct CiouGradient {
  CiouTerms terms;
  std::array<double, 4> d_pred{};  // d loss / d (cx, cy, w, h)
};

CiouGradient ciou_loss_gradient(const Box& pred, const Box& gt, CiouForm form,
                                AlphaMode alpha_mode = AlphaMode::constant);

/// Logits are clamped to +-30 before evaluation.
inline constexpr double kLogitClamp = 30.0;

/// Stable elementwise BCE on a logit; returns the value, writes d/dz.
double bce_with_logit(double logit, double target, double* d_logit = nullptr);

/// Mean binary cross entropy of probabilities against targets in [0, 1].
/// Probabilities are converted to clamped logits.
double bce_loss(std::span<const double> probabilities, std::span<const double> targets);
double bce_loss_logits(std::span<const double> logits, std::span<const double> targets);

struct LossCoefficients {
  double box = 0.05;
  double cls = 0.5;
  double obj = 1.0;
  bool operator==(const LossCoefficients&) const = default;
};

/// coef_box * box + coef_cls * cls + coef_obj * obj.
double total_loss(double box, double cls, double obj, const LossCoefficients& coef = {});

}  // namespace appledet::boxloss
