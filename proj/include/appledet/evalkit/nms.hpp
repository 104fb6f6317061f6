#pragma once

#include <vector>

#include "appledet/boxloss/box.hpp"

namespace appledet::evalkit {

using boxloss::Detection;

struct NmsOptions {
  double iou_threshold = 0.45;
  double conf_threshold = 0.25;
};

/// Greedy class-aware suppression, independently per image. Output is sorted
/// by confidence (descending; ties keep input order).
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold,
                           double conf_threshold);
inline std::vector<Detection> nms(const std::vector<Detection>& dets, const NmsOptions& o = {}) {
  return nms(dets, o.iou_threshold, o.conf_threshold);
}

}  // namespace appledet::evalkit
