#pragma once

#include <cstdint>
#include <vector>

#include "appledet/boxloss/box.hpp"

namespace appledet::data {

/// 8-bit interleaved raster, row-major. channels is 3 (RGB) or 1 (gray).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  static Image rgb(int width, int height, std::uint8_t fill = 0);
  static Image gray(int width, int height, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

inline std::uint8_t clamp_byte(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(v + 0.5);
}

/// Writes the image as planar CHW values in [0, 1] starting at `out`.
void to_planar(const Image& image, double* out);

struct Letterbox {
  Image image;
  int pad_left = 0;
  int pad_top = 0;
  bool padded = false;
};

/// Pads (never resizes) to the next multiple of `multiple` in each dimension,
/// centering the original on a constant gray canvas.
Letterbox letterbox(const Image& image, int multiple, std::uint8_t pad_value = 114);

/// Axis-aligned rectangle outline, clipped to the canvas.
void draw_rectangle(Image& image, const boxloss::Box& box_px, std::uint8_t r, std::uint8_t g,
                    std::uint8_t b, int thickness = 1);

}  // namespace appledet::data
