#include "appledet/data/image.hpp"

#include <algorithm>
#include <cmath>

#include "appledet/common/error.hpp"

namespace appledet::data {

Image Image::rgb(int width, int height, std::uint8_t fill) {
  require(width > 0 && height > 0, "image: dimensions must be positive");
  return Image{width, height, 3,
               std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3, fill)};
}

Image Image::gray(int width, int height, std::uint8_t fill) {
  require(width > 0 && height > 0, "image: dimensions must be positive");
  return Image{width, height, 1,
               std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, fill)};
}

void to_planar(const Image& image, double* out) {
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (int c = 0; c < image.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = image.pixels[i * image.channels + c] / 255.0;
    }
  }
}

Letterbox letterbox(const Image& image, int multiple, std::uint8_t pad_value) {
  require(multiple > 0, "letterbox: multiple must be positive");
  const int w = (image.width + multiple - 1) / multiple * multiple;
  const int h = (image.height + multiple - 1) / multiple * multiple;
  Letterbox out;
  if (w == image.width && h == image.height) {
    out.image = image;
    return out;
  }
  out.padded = true;
  out.pad_left = (w - image.width) / 2;
  out.pad_top = (h - image.height) / 2;
  out.image = Image{w, h, image.channels,
                    std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * image.channels,
                                              pad_value)};
  for (int y = 0; y < image.height; ++y) {
    std::copy_n(&image.pixels[static_cast<std::size_t>(y) * image.width * image.channels],
                static_cast<std::size_t>(image.width) * image.channels,
                &out.image.at(out.pad_left, y + out.pad_top, 0));
  }
  return out;
}

void draw_rectangle(Image& image, const boxloss::Box& box, std::uint8_t r, std::uint8_t g,
                    std::uint8_t b, int thickness) {
  const int x1 = std::clamp(static_cast<int>(std::floor(box.x1())), 0, image.width - 1);
  const int y1 = std::clamp(static_cast<int>(std::floor(box.y1())), 0, image.height - 1);
  const int x2 = std::clamp(static_cast<int>(std::ceil(box.x2())) - 1, 0, image.width - 1);
  const int y2 = std::clamp(static_cast<int>(std::ceil(box.y2())) - 1, 0, image.height - 1);
  const std::uint8_t color[3] = {r, g, b};
  auto put = [&](int x, int y) {
    if (image.channels == 1) {
      image.at(x, y, 0) = g;
      return;
    }
    for (int c = 0; c < 3; ++c) image.at(x, y, c) = color[c];
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = x1; x <= x2; ++x) {
      put(x, std::min(y1 + t, y2));
      put(x, std::max(y2 - t, y1));
    }
    for (int y = y1; y <= y2; ++y) {
      put(std::min(x1 + t, x2), y);
      put(std::max(x2 - t, x1), y);
    }
  }
}

}  // namespace appledet::data
