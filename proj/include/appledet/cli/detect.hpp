#pragma once

#include <filesystem>
#include <vector>

#include "appledet/boxloss/box.hpp"
#include "appledet/cli/config.hpp"

namespace appledet::cli {

struct DetectOutputs {
  std::vector<boxloss::Detection> detections;  // original image frame, pixels
  std::filesystem::path list;                  // "class conf x1 y1 x2 y2" per line
  std::filesystem::path annotated;             // PPM, apple green, block red
};

/// Runs a checkpoint on one netpbm image. Detections below
/// config.conf_threshold are dropped; an empty result still writes both files.
DetectOutputs cmd_detect(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                         const std::filesystem::path& out_dir, const RunConfig& config);

/// Heat map of one named feature map ("head_input.s4", "backbone.p3", ...)
/// for an image, written as PGM at the (letterboxed) input resolution.
/// Returns the warning text, empty when the map had a nonzero range.
std::string cmd_heatmap(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                        const std::string& layer, const std::filesystem::path& out,
                        const RunConfig& config);

}  // namespace appledet::cli
