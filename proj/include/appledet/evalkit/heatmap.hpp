#pragma once

#include <filesystem>
#include <string>

#include "appledet/data/image.hpp"
#include "appledet/tensor/tensor.hpp"

namespace appledet::evalkit {

struct Heatmap {
  data::Image image;    // gray, output resolution
  bool constant = false;
  std::string warning;  // set when the map had zero range
};

/// Channel-wise mean of |activation| for batch item `index`, min-max scaled
/// to [0, 255], nearest-upsampled to width x height (integer factors).
Heatmap feature_heatmap(const tensor::Tensor& feature, int index, int width, int height);

/// Writes the heat map as binary PGM.
Heatmap export_heatmap(const tensor::Tensor& feature, int index, int width, int height,
                       const std::filesystem::path& path);

}  // namespace appledet::evalkit
