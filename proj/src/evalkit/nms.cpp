#include "appledet/evalkit/nms.hpp"

#include <algorithm>
#include <numeric>

#include "appledet/common/error.hpp"

namespace appledet::evalkit {

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold,
                           double conf_threshold) {
  require(iou_threshold >= 0.0 && iou_threshold <= 1.0 && conf_threshold >= 0.0 &&
              conf_threshold <= 1.0,
          "nms: thresholds must lie in [0, 1]");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].confidence >= conf_threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    const Detection& d = dets[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.image_id == d.image_id && k.box.class_id == d.box.class_id &&
             boxloss::iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace appledet::evalkit
