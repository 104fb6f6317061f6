#include "appledet/data/augment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"

namespace appledet::data {

namespace {

constexpr const char* kMethodNames[] = {"contrast",    "edge_enhance", "clahe",
                                        "motion_blur", "perspective",  "salt_pepper",
                                        "max_pool",    "color_temperature"};

// Correlation with replicated borders; kernel is k x k, k odd.
Image filter(const Image& in, const std::vector<double>& kernel, int k) {
  Image out = in;
  const int r = k / 2;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
          const int sy = std::clamp(y + j - r, 0, in.height - 1);
          for (int i = 0; i < k; ++i) {
            const double w = kernel[static_cast<std::size_t>(j) * k + i];
            if (w == 0.0) continue;
            const int sx = std::clamp(x + i - r, 0, in.width - 1);
            acc += w * in.at(sx, sy, c);
          }
        }
        out.at(x, y, c) = clamp_byte(acc);
      }
    }
  }
  return out;
}

double luminance(const Image& in, int x, int y) {
  if (in.channels == 1) return in.at(x, y, 0);
  return 0.299 * in.at(x, y, 0) + 0.587 * in.at(x, y, 1) + 0.114 * in.at(x, y, 2);
}

Homography invert(const Homography& h) {
  const double a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6],
               hh = h[7], i = h[8];
  const double A = e * i - f * hh, B = -(d * i - f * g), C = d * hh - e * g;
  const double det = a * A + b * B + c * C;
  require(std::abs(det) > 1e-12, "perspective: singular homography");
  return {A / det,
          -(b * i - c * hh) / det,
          (b * f - c * e) / det,
          B / det,
          (a * i - c * g) / det,
          -(a * f - c * d) / det,
          C / det,
          -(a * hh - b * g) / det,
          (a * e - b * d) / det};
}

}  // namespace

std::string to_string(Method m) { return kMethodNames[static_cast<int>(m)]; }

Method parse_method(const std::string& name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw InvalidInput("unknown augmentation method '" + name + "'");
}

std::string AugmentationChain::serialize() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& s : steps) out << to_string(s.method) << ' ' << s.value << ' ' << s.seed << '\n';
  return out.str();
}

AugmentationChain AugmentationChain::parse(const std::string& text) {
  AugmentationChain chain;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string name;
    AugmentStep step;
    if (!(fields >> name >> step.value >> step.seed)) {
      throw InvalidInput("augmentation chain line " + std::to_string(line_no) +
                         ": expected 'method value seed'");
    }
    step.method = parse_method(name);
    chain.steps.push_back(step);
  }
  return chain;
}

AugmentStep random_step(Method method, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xa06));
  AugmentStep step{method, 1.0, rng.next()};
  switch (method) {
    case Method::contrast: step.value = rng.uniform(0.5, 1.5); break;
    case Method::edge_enhance: step.value = 1.0; break;
    case Method::clahe: step.value = 2.0; break;
    case Method::motion_blur: step.value = 9; break;
    case Method::perspective: step.value = 0.05; break;
    case Method::salt_pepper: step.value = 0.02; break;
    case Method::max_pool: step.value = 2; break;
    case Method::color_temperature:
      step.value = std::exp(rng.uniform(std::log(0.8), std::log(1.25)));
      break;
  }
  return step;
}

Image adjust_contrast(const Image& in, double c) {
  require(c >= 0.0, "contrast: factor must be non-negative");
  Image out = in;
  for (auto& p : out.pixels) p = clamp_byte((p - 128.0) * c + 128.0);
  return out;
}

Image edge_enhance(const Image& in, double s) {
  // Blend between the identity and the sharpen kernel (center 5, cross -1).
  const std::vector<double> k = {0, -s, 0, -s, 1 + 4 * s, -s, 0, -s, 0};
  return filter(in, k, 3);
}

double clahe_bin_limit(double clip_limit, int tile_pixels) {
  return std::max(1.0, clip_limit * tile_pixels / 256.0);
}

ClippedHistogram clip_histogram(const std::array<double, 256>& hist, double limit) {
  ClippedHistogram out;
  double excess = 0.0;
  for (int i = 0; i < 256; ++i) {
    out.clipped[i] = std::min(hist[i], limit);
    excess += hist[i] - out.clipped[i];
  }
  const double share = excess / 256.0;
  for (int i = 0; i < 256; ++i) out.redistributed[i] = out.clipped[i] + share;
  return out;
}

Image clahe(const Image& in, double clip_limit, int tiles) {
  require(clip_limit > 0.0, "clahe: clip limit must be positive");
  require(tiles >= 1 && in.width >= tiles && in.height >= tiles,
          "clahe: image smaller than the tile grid");
  const auto edge = [](int extent, int tiles, int t) {
    return static_cast<int>(static_cast<long>(extent) * t / tiles);
  };
  std::vector<int> bin(static_cast<std::size_t>(in.width) * in.height);
  std::vector<double> lum(bin.size());
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * in.width + x;
      lum[i] = luminance(in, x, y);
      bin[i] = clamp_byte(lum[i]);
    }
  }
  std::vector<std::array<double, 256>> lut(static_cast<std::size_t>(tiles) * tiles);
  for (int ty = 0; ty < tiles; ++ty) {
    for (int tx = 0; tx < tiles; ++tx) {
      std::array<double, 256> hist{};
      int n = 0;
      for (int y = edge(in.height, tiles, ty); y < edge(in.height, tiles, ty + 1); ++y) {
        for (int x = edge(in.width, tiles, tx); x < edge(in.width, tiles, tx + 1); ++x) {
          hist[bin[static_cast<std::size_t>(y) * in.width + x]] += 1.0;
          ++n;
        }
      }
      auto& table = lut[static_cast<std::size_t>(ty) * tiles + tx];
      const int occupied =
          static_cast<int>(std::count_if(hist.begin(), hist.end(), [](double v) { return v > 0; }));
      if (occupied <= 1) {
        for (int i = 0; i < 256; ++i) table[i] = i;  // flat tile: identity
        continue;
      }
      const auto clipped = clip_histogram(hist, clahe_bin_limit(clip_limit, n));
      double cdf = 0.0;
      for (int i = 0; i < 256; ++i) {
        cdf += clipped.redistributed[i];
        table[i] = std::round(cdf * 255.0 / n);
      }
    }
  }
  Image out = in;
  const double tw = static_cast<double>(in.width) / tiles;
  const double th = static_cast<double>(in.height) / tiles;
  for (int y = 0; y < in.height; ++y) {
    const double fy = std::clamp((y + 0.5) / th - 0.5, 0.0, tiles - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, tiles - 1);
    const double wy = fy - y0;
    for (int x = 0; x < in.width; ++x) {
      const double fx = std::clamp((x + 0.5) / tw - 0.5, 0.0, tiles - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, tiles - 1);
      const double wx = fx - x0;
      const std::size_t i = static_cast<std::size_t>(y) * in.width + x;
      const int b = bin[i];
      const auto L = [&](int tx, int ty) { return lut[static_cast<std::size_t>(ty) * tiles + tx][b]; };
      const double mapped = (1 - wy) * ((1 - wx) * L(x0, y0) + wx * L(x1, y0)) +
                            wy * ((1 - wx) * L(x0, y1) + wx * L(x1, y1));
      const double delta = mapped - b;
      if (delta == 0.0) continue;
      for (int c = 0; c < in.channels; ++c) out.at(x, y, c) = clamp_byte(in.at(x, y, c) + delta);
    }
  }
  return out;
}

std::vector<double> line_kernel(int length, double angle) {
  require(length >= 1 && length % 2 == 1, "motion_blur: length must be odd and >= 1");
  std::vector<double> k(static_cast<std::size_t>(length) * length, 0.0);
  const double c = (length - 1) / 2.0;
  const int samples = 4 * length;
  for (int s = 0; s <= samples; ++s) {
    const double t = -c + 2.0 * c * s / samples;
    const int x = static_cast<int>(std::lround(c + t * std::cos(angle)));
    const int y = static_cast<int>(std::lround(c + t * std::sin(angle)));
    k[static_cast<std::size_t>(y) * length + x] = 1.0;
  }
  double total = 0.0;
  for (double v : k) total += v;
  for (double& v : k) v /= total;
  return k;
}

Image motion_blur(const Image& in, int length, double angle) {
  return filter(in, line_kernel(length, angle), length);
}

Image salt_pepper(const Image& in, double p, std::uint64_t seed) {
  require(p >= 0.0 && p <= 1.0, "salt_pepper: probability outside [0, 1]");
  Rng rng(seed);
  Image out = in;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      if (!(rng.uniform() < p)) continue;
      const std::uint8_t v = rng.bernoulli(0.5) ? 255 : 0;
      for (int c = 0; c < in.channels; ++c) out.at(x, y, c) = v;
    }
  }
  return out;
}

Image max_pool(const Image& in, int size) {
  require(size >= 1, "max_pool: size must be >= 1");
  Image out = in;
  for (int by = 0; by < in.height; by += size) {
    for (int bx = 0; bx < in.width; bx += size) {
      const int ey = std::min(by + size, in.height), ex = std::min(bx + size, in.width);
      for (int c = 0; c < in.channels; ++c) {
        std::uint8_t m = 0;
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) m = std::max(m, in.at(x, y, c));
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) out.at(x, y, c) = m;
      }
    }
  }
  return out;
}

Image color_temperature(const Image& in, double t) {
  require(t > 0.0, "color_temperature: t must be positive");
  require(in.channels == 3, "color_temperature: needs an RGB image");
  Image out = in;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      out.at(x, y, 0) = clamp_byte(in.at(x, y, 0) * t);
      out.at(x, y, 2) = clamp_byte(in.at(x, y, 2) / t);
    }
  }
  return out;
}

Homography perspective_homography(int width, int height, double jitter, std::uint64_t seed) {
  require(jitter >= 0.0 && jitter <= 0.05, "perspective: jitter must be in [0, 0.05]");
  if (jitter == 0.0) return {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Rng rng(seed);
  const double src[4][2] = {{0, 0}, {double(width), 0}, {double(width), double(height)},
                            {0, double(height)}};
  double dst[4][2];
  for (int i = 0; i < 4; ++i) {
    dst[i][0] = src[i][0] + rng.uniform(-jitter, jitter) * width;
    dst[i][1] = src[i][1] + rng.uniform(-jitter, jitter) * height;
  }
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0], y = src[i][1], u = dst[i][0], v = dst[i][1];
    A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(b);
  return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

std::array<double, 2> apply_homography(const Homography& h, double x, double y) {
  const double w = h[6] * x + h[7] * y + h[8];
  return {(h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w};
}

Image warp_perspective(const Image& in, const Homography& h, std::uint8_t fill) {
  const Homography inv = invert(h);
  Image out = in;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const auto [sx, sy] = apply_homography(inv, x + 0.5, y + 0.5);
      const double u = sx - 0.5, v = sy - 0.5;
      if (!(u >= -0.5 && v >= -0.5 && u <= in.width - 0.5 && v <= in.height - 0.5)) {
        for (int c = 0; c < in.channels; ++c) out.at(x, y, c) = fill;
        continue;
      }
      const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
      const double fu = u - u0, fv = v - v0;
      const int xa = std::clamp(u0, 0, in.width - 1), xb = std::clamp(u0 + 1, 0, in.width - 1);
      const int ya = std::clamp(v0, 0, in.height - 1), yb = std::clamp(v0 + 1, 0, in.height - 1);
      for (int c = 0; c < in.channels; ++c) {
        const double val = (1 - fv) * ((1 - fu) * in.at(xa, ya, c) + fu * in.at(xb, ya, c)) +
                           fv * ((1 - fu) * in.at(xa, yb, c) + fu * in.at(xb, yb, c));
        out.at(x, y, c) = clamp_byte(val);
      }
    }
  }
  return out;
}

bool warp_box(const boxloss::Box& b, const Homography& h, int width, int height,
              boxloss::Box* out) {
  if (h == Homography{1, 0, 0, 0, 1, 0, 0, 0, 1}) {
    // The identity leaves the box untouched, unclipped.
    *out = b;
    return true;
  }
  double x1 = INFINITY, y1 = INFINITY, x2 = -INFINITY, y2 = -INFINITY;
  for (const auto& [cx, cy] : {std::pair{b.x1(), b.y1()}, std::pair{b.x2(), b.y1()},
                               std::pair{b.x2(), b.y2()}, std::pair{b.x1(), b.y2()}}) {
    const auto [u, v] = apply_homography(h, cx, cy);
    x1 = std::min(x1, u);
    y1 = std::min(y1, v);
    x2 = std::max(x2, u);
    y2 = std::max(y2, v);
  }
  x1 = std::clamp(x1, 0.0, double(width));
  x2 = std::clamp(x2, 0.0, double(width));
  y1 = std::clamp(y1, 0.0, double(height));
  y2 = std::clamp(y2, 0.0, double(height));
  if (!(x2 > x1 && y2 > y1)) return false;
  *out = boxloss::Box::from_corners(x1, y1, x2, y2, b.class_id);
  return true;
}

Scene apply_step(const Scene& scene, const AugmentStep& step, AugmentLog* log) {
  Scene out = scene;
  const Image& img = scene.image;
  switch (step.method) {
    case Method::contrast: out.image = adjust_contrast(img, step.value); break;
    case Method::edge_enhance: out.image = edge_enhance(img, step.value); break;
    case Method::clahe: out.image = clahe(img, step.value); break;
    case Method::motion_blur: {
      Rng rng(step.seed);
      out.image = motion_blur(img, static_cast<int>(step.value), rng.uniform(0, std::numbers::pi));
      break;
    }
    case Method::salt_pepper: out.image = salt_pepper(img, step.value, step.seed); break;
    case Method::max_pool: out.image = max_pool(img, static_cast<int>(step.value)); break;
    case Method::color_temperature: out.image = color_temperature(img, step.value); break;
    case Method::perspective: {
      const Homography h = perspective_homography(img.width, img.height, step.value, step.seed);
      out.image = warp_perspective(img, h);
      out.truths.clear();
      out.meta.clear();
      for (std::size_t i = 0; i < scene.truths.size(); ++i) {
        boxloss::Box mapped;
        if (!warp_box(scene.truths[i], h, img.width, img.height, &mapped)) {
          if (log) {
            log->entries.push_back("perspective: truth " + std::to_string(i) +
                                   " clipped to zero area, dropped");
          }
          continue;
        }
        out.truths.push_back(mapped);
        if (i < scene.meta.size()) {
          ObjectMeta m = scene.meta[i];
          const auto [cx, cy] = apply_homography(h, m.cx, m.cy);
          m.cx = cx;
          m.cy = cy;
          out.meta.push_back(m);
        }
      }
      break;
    }
  }
  return out;
}

Scene augment(const Scene& scene, const AugmentationChain& chain, AugmentLog* log) {
  Scene out = scene;
  for (const auto& step : chain.steps) out = apply_step(out, step, log);
  return out;
}

}  // namespace appledet::data
