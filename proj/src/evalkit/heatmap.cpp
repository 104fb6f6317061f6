#include "appledet/evalkit/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "appledet/common/error.hpp"
#include "appledet/data/netpbm.hpp"

namespace appledet::evalkit {

Heatmap feature_heatmap(const tensor::Tensor& feature, int index, int width, int height) {
  const tensor::Shape s = feature.shape();
  require(index >= 0 && index < s.n, "heatmap: batch index out of range");
  require(width % s.w == 0 && height % s.h == 0,
          "heatmap: output " + std::to_string(width) + "x" + std::to_string(height) +
              " is not an integer multiple of the feature map " + s.str());
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const auto x = feature.data();
  std::vector<double> mean(plane, 0.0);
  for (int c = 0; c < s.c; ++c) {
    const double* p = x.data() + (static_cast<std::size_t>(index) * s.c + c) * plane;
    for (std::size_t i = 0; i < plane; ++i) mean[i] += std::abs(p[i]);
  }
  for (double& v : mean) v /= s.c;
  const auto [lo, hi] = std::minmax_element(mean.begin(), mean.end());
  const double range = *hi - *lo;

  Heatmap out;
  out.image = data::Image::gray(width, height);
  if (!(range > 0.0)) {
    out.constant = true;
    out.warning = "heatmap: constant feature map, writing an all-zero image";
    return out;
  }
  const double low = *lo;
  const int fx = width / s.w, fy = height / s.h;
  for (int y = 0; y < height; ++y) {
    for (int xx = 0; xx < width; ++xx) {
      const double v = (mean[static_cast<std::size_t>(y / fy) * s.w + xx / fx] - low) / range;
      out.image.at(xx, y, 0) = data::clamp_byte(255.0 * v);
    }
  }
  return out;
}

Heatmap export_heatmap(const tensor::Tensor& feature, int index, int width, int height,
                       const std::filesystem::path& path) {
  Heatmap h = feature_heatmap(feature, index, width, height);
  data::write_netpbm(path, h.image);
  return h;
}

}  // namespace appledet::evalkit
