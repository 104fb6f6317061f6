#pragma once

#include <cstdint>
#include <vector>

#include "appledet/boxloss/box.hpp"
#include "appledet/data/image.hpp"

namespace appledet::data {

struct SceneConfig {
  int size = 64;  // square canvas, multiple of 32
  int min_objects = 1;
  int max_objects = 4;
  /// Apple radius range as a fraction of the canvas size.
  double min_radius = 0.07;
  double max_radius = 0.16;
  /// Leaves and branch strokes drawn in front of the fruit, per object.
  double occluder_density = 0.8;
  /// Occluded-area fraction above which an apple is labeled block.
  double block_threshold = 0.25;
  /// Apples with a radius (pixels) below this stay apple regardless of
  /// occlusion: small distant fruit.
  double small_radius_px = 4.0;
};

struct ObjectMeta {
  double cx = 0.0;  // disk center and radius, pixels
  double cy = 0.0;
  double radius = 0.0;
  double occlusion = 0.0;  // covered fraction of the disk's pixels
  int class_id = boxloss::kApple;
};

struct Scene {
  Image image;
  std::vector<boxloss::Box> truths;  // pixel units, clipped to the canvas
  std::uint64_t seed = 0;
  std::vector<ObjectMeta> meta;      // parallel to truths
};

/// Deterministic in (seed, config).
Scene generate_scene(std::uint64_t seed, const SceneConfig& config = {});

}  // namespace appledet::data
