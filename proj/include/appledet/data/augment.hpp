#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "appledet/data/scene.hpp"

namespace appledet::data {

enum class Method {
  contrast,
  edge_enhance,
  clahe,
  motion_blur,
  perspective,
  salt_pepper,
  max_pool,
  color_temperature,
};

inline constexpr std::array<Method, 8> kAllMethods = {
    Method::contrast,    Method::edge_enhance, Method::clahe,    Method::motion_blur,
    Method::perspective, Method::salt_pepper,  Method::max_pool, Method::color_temperature};

std::string to_string(Method m);
Method parse_method(const std::string& name);

/// One step of a chain. `value` is the method's main parameter:
///   contrast           factor c in [0.5, 1.5]; 1 is the identity
///   edge_enhance       sharpen strength; 1 gives center 5 / cross -1, 0 the identity
///   clahe              clip limit (8x8 tiles)
///   motion_blur        odd kernel length; 1 is the identity
///   perspective        corner jitter as a fraction of each dimension, <= 0.05
///   salt_pepper        per-pixel corruption probability
///   max_pool           pool size; 1 is the identity
///   color_temperature  t in [0.8, 1.25]: R * t, B / t; 1 is the identity
/// `seed` drives any randomness inside the step (blur angle, jitter, noise).
struct AugmentStep {
  Method method = Method::contrast;
  double value = 1.0;
  std::uint64_t seed = 0;
  bool operator==(const AugmentStep&) const = default;
};

struct AugmentationChain {
  std::vector<AugmentStep> steps;

  /// One "method value seed" line per step; parse skips blank and # lines.
  std::string serialize() const;
  static AugmentationChain parse(const std::string& text);
  bool operator==(const AugmentationChain&) const = default;
};

/// Default-range parameters for `method`, drawn from `seed`.
AugmentStep random_step(Method method, std::uint64_t seed);

/// Entries describe dropped truths.
struct AugmentLog {
  std::vector<std::string> entries;
};

Scene augment(const Scene& scene, const AugmentationChain& chain, AugmentLog* log = nullptr);
Scene apply_step(const Scene& scene, const AugmentStep& step, AugmentLog* log = nullptr);

// Individual transforms, exposed for testing.
Image adjust_contrast(const Image& in, double c);
Image edge_enhance(const Image& in, double strength);
Image clahe(const Image& in, double clip_limit, int tiles = 8);
Image motion_blur(const Image& in, int length, double angle);
Image salt_pepper(const Image& in, double p, std::uint64_t seed);
Image max_pool(const Image& in, int size);
Image color_temperature(const Image& in, double t);

/// Motion-blur kernel, length x length, row-major, sums to 1.
std::vector<double> line_kernel(int length, double angle);

/// Tile histogram clipping: counts above `limit` are cut (`clipped`) and the
/// excess is spread evenly over all bins (`redistributed`).
struct ClippedHistogram {
  std::array<double, 256> clipped{};
  std::array<double, 256> redistributed{};
};
ClippedHistogram clip_histogram(const std::array<double, 256>& hist, double limit);
/// Absolute per-bin clip limit for a tile of `tile_pixels` pixels.
double clahe_bin_limit(double clip_limit, int tile_pixels);

/// Plane homography, row-major 3x3, mapping source to destination pixels.
using Homography = std::array<double, 9>;

/// Corner jitter drawn from the seed; zero jitter gives the exact identity.
Homography perspective_homography(int width, int height, double jitter, std::uint64_t seed);
std::array<double, 2> apply_homography(const Homography& h, double x, double y);
/// Bilinear warp; pixels mapping outside the source take `fill`.
Image warp_perspective(const Image& in, const Homography& h, std::uint8_t fill = 114);
/// Axis-aligned hull of the mapped corners, clipped to the canvas. Returns
/// false when the clipped box has zero area. The identity homography returns
/// the box unchanged.
bool warp_box(const boxloss::Box& box_px, const Homography& h, int width, int height,
              boxloss::Box* out);

}  // namespace appledet::data
