#pragma once

#include <vector>

#include "appledet/blocks/network_spec.hpp"
#include "appledet/boxloss/box.hpp"
#include "appledet/boxloss/targets.hpp"
#include "appledet/tensor/tensor.hpp"

namespace appledet::boxloss {

struct LossConfig {
  LossCoefficients coefficients;
  CiouForm ciou_form = CiouForm::squared;
  AlphaMode alpha_mode = AlphaMode::constant;
  /// Objectness target at a positive slot is the (clamped) CIoU of the
  /// current prediction instead of 1.
  bool iou_scaled_objectness = true;
  /// Per-level objectness weights in network stride order; empty selects
  /// default_objectness_balance.
  std::vector<double> objectness_balance;
};

/// 4.0 / 1.0 / 0.4 for strides 8 / 16 / 32 and 0.1 for stride 4.
std::vector<double> default_objectness_balance(const std::vector<int>& strides);

struct LossBreakdown {
  tensor::Tensor total;  // differentiable scalar
  double box = 0.0;      // unweighted components
  double cls = 0.0;
  double obj = 0.0;
  double total_value = 0.0;
  std::size_t positives = 0;
};

/// Three-part detection loss over all heads:
///   box: per-level mean CIoU loss over positive slots, summed over levels
///   cls: per-level mean BCE over positive slots x classes, summed
///   obj: per-level mean BCE over every slot times the level balance, summed
/// and total = coef_box * box + coef_cls * cls + coef_obj * obj.
LossBreakdown detection_loss(const std::vector<tensor::Tensor>& heads,
                             const AssignedTargets& targets, const blocks::NetworkSpec& spec,
                             const LossConfig& config = {});

}  // namespace appledet::boxloss
