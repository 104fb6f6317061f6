#include "appledet/boxloss/targets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "appledet/common/error.hpp"

namespace appledet::boxloss {

std::size_t AssignedTargets::total() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.entries.size();
  return n;
}

double anchor_ratio(double truth_w, double truth_h, double anchor_w, double anchor_h) {
  const double rw = truth_w / anchor_w;
  const double rh = truth_h / anchor_h;
  return std::max({rw, 1.0 / rw, rh, 1.0 / rh});
}

AssignedTargets assign_targets(const std::vector<std::vector<Box>>& truths,
                               const blocks::NetworkSpec& spec, int image_h, int image_w,
                               const AssignConfig& config) {
  spec.validate();
  require(image_h > 0 && image_w > 0 && image_h % spec.max_stride() == 0 &&
              image_w % spec.max_stride() == 0,
          "assign_targets: image size " + std::to_string(image_w) + "x" +
              std::to_string(image_h) + " not divisible by stride " +
              std::to_string(spec.max_stride()));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    for (std::size_t t = 0; t < truths[i].size(); ++t) {
      const Box& b = truths[i][t];
      require(b.valid(), "assign_targets: truth " + std::to_string(t) + " of image " +
                             std::to_string(i) + " has nonpositive extent");
    }
  }

  AssignedTargets out;
  out.batch = static_cast<int>(truths.size());
  for (std::size_t level = 0; level < spec.strides.size(); ++level) {
    const int stride = spec.strides[level];
    LevelTargets lt;
    lt.stride = stride;
    lt.grid_h = image_h / stride;
    lt.grid_w = image_w / stride;

    // slot -> (ratio, truth index, assignment)
    using Key = std::tuple<int, int, int, int>;
    std::map<Key, std::pair<std::pair<double, int>, Assignment>> slots;
    for (int img = 0; img < out.batch; ++img) {
      const auto& boxes = truths[img];
      for (int t = 0; t < static_cast<int>(boxes.size()); ++t) {
        const Box& b = boxes[t];
        const double gx = b.cx * lt.grid_w;
        const double gy = b.cy * lt.grid_h;
        const double gw = b.w * lt.grid_w;
        const double gh = b.h * lt.grid_h;
        const int col = std::clamp(static_cast<int>(std::floor(gx)), 0, lt.grid_w - 1);
        const int row = std::clamp(static_cast<int>(std::floor(gy)), 0, lt.grid_h - 1);

        std::vector<std::pair<int, int>> cells{{row, col}};
        if (config.neighbor_cells) {
          const double fx = gx - std::floor(gx);
          const double fy = gy - std::floor(gy);
          if (fx < 0.5 && gx > 1.0) cells.emplace_back(row, col - 1);
          if (fx > 0.5 && lt.grid_w - gx > 1.0) cells.emplace_back(row, col + 1);
          if (fy < 0.5 && gy > 1.0) cells.emplace_back(row - 1, col);
          if (fy > 0.5 && lt.grid_h - gy > 1.0) cells.emplace_back(row + 1, col);
        }

        for (int a = 0; a < blocks::NetworkSpec::kAnchorsPerStride; ++a) {
          const double aw = spec.anchors[level][a].w / stride;
          const double ah = spec.anchors[level][a].h / stride;
          const double ratio = anchor_ratio(gw, gh, aw, ah);
          if (!(ratio < config.anchor_threshold)) continue;
          for (const auto& [r, c] : cells) {
            Assignment e{img, r, c, a, b.class_id, t, gx, gy, gw, gh, aw, ah};
            const Key key{img, r, c, a};
            const std::pair<double, int> rank{ratio, t};
            auto it = slots.find(key);
            if (it == slots.end()) {
              slots.emplace(key, std::make_pair(rank, e));
            } else if (rank < it->second.first) {
              it->second = {rank, e};
            }
          }
        }
      }
    }
    for (auto& [key, value] : slots) lt.entries.push_back(value.second);
    out.levels.push_back(std::move(lt));
  }
  return out;
}

}  // namespace appledet::boxloss
