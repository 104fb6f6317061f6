#pragma once

#include <vector>

#include "appledet/blocks/network_spec.hpp"
#include "appledet/boxloss/box.hpp"

namespace appledet::boxloss {

struct AssignConfig {
  /// A truth matches an anchor when max(w_t/w_a, w_a/w_t, h_t/h_a, h_a/h_t)
  /// is below this.
  double anchor_threshold = 4.0;
  /// Also assign the horizontal and vertical neighbor cells nearest the
  /// truth center.
  bool neighbor_cells = true;
};

/// One positive slot. Geometry is in grid units of the owning level.
struct Assignment {
  int image = 0;
  int row = 0;
  int col = 0;
  int anchor = 0;
  int class_id = 0;
  int truth_index = 0;   // index into that image's truth list
  double gx = 0.0;       // truth center and size in grid units
  double gy = 0.0;
  double gw = 0.0;
  double gh = 0.0;
  double anchor_w = 0.0;  // anchor size in grid units
  double anchor_h = 0.0;

  /// Truth relative to the cell's top-left corner, the frame the decoded
  /// prediction lives in.
  Box target_in_cell() const { return Box{gx - col, gy - row, gw, gh, class_id}; }
  bool same_slot(const Assignment& o) const {
    return image == o.image && row == o.row && col == o.col && anchor == o.anchor;
  }
};

struct LevelTargets {
  int stride = 0;
  int grid_h = 0;
  int grid_w = 0;
  std::vector<Assignment> entries;  // sorted by (image, row, col, anchor)
};

struct AssignedTargets {
  int batch = 0;
  std::vector<LevelTargets> levels;  // one per network stride
  std::size_t total() const;
};

/// Largest of the four width/height ratios between a truth and an anchor.
double anchor_ratio(double truth_w, double truth_h, double anchor_w, double anchor_h);

/// truths[i] are image i's boxes in normalized [0, 1] coordinates. When two
/// truths claim the same (level, cell, anchor) slot, the one with the smaller
/// anchor ratio keeps it (ties: lower truth index).
AssignedTargets assign_targets(const std::vector<std::vector<Box>>& truths,
                               const blocks::NetworkSpec& spec, int image_h, int image_w,
                               const AssignConfig& config = {});

}  // namespace appledet::boxloss
