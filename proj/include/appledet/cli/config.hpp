#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "appledet/blocks/network_spec.hpp"
#include "appledet/boxloss/box.hpp"

namespace appledet::cli {

enum class Profile { desk, full };
Profile parse_profile(const std::string& name);

/// Everything a run depends on. Serialized as sectioned "key = value" text:
///
///   [network]    variant, depth_multiple, width_multiple, num_classes, strides, anchors
///   [optimizer]  learning_rate, momentum, weight_decay, lr_schedule, loss_scale
///   [loss]       box, cls, obj, ciou_form, iou_scaled_objectness, objectness_balance
///   [training]   epochs, batch_size, image_size, seed, online_augment
///   [eval]       conf_threshold, nms_iou, match_iou, conf_floor
///   [data]       scenes, train_fraction, occluder_density, min_objects, max_objects
struct RunConfig {
  blocks::NetworkSpec network = blocks::NetworkSpec::make(blocks::Variant::yolov5s_bc);

  double learning_rate = 0.01;
  double momentum = 0.937;
  double weight_decay = 0.0005;
  std::string lr_schedule = "constant";  // or "cosine"
  /// "batch" multiplies the mean loss by the batch size before backward;
  /// "none" keeps the mean.
  std::string loss_scale = "batch";

  boxloss::LossCoefficients coefficients;
  boxloss::CiouForm ciou_form = boxloss::CiouForm::squared;
  bool iou_scaled_objectness = true;
  /// Per-level objectness weights in stride order; empty means the default
  /// for the strides ("auto" in the file).
  std::vector<double> objectness_balance;

  int epochs = 30;
  int batch_size = 8;
  int image_size = 64;
  std::uint64_t seed = 0;
  /// Random flips of the training images each epoch.
  bool online_augment = true;

  double conf_threshold = 0.25;
  double nms_iou = 0.45;
  double match_iou = 0.5;
  double conf_floor = 0.001;

  int scenes = 200;
  double train_fraction = 0.85;
  double occluder_density = 0.8;
  int min_objects = 1;
  int max_objects = 4;

  static RunConfig defaults(Profile profile = Profile::desk);

  /// Throws InvalidInput on out-of-range values.
  void validate() const;

  std::string serialize() const;
  /// Just the "[network]" section, as stored in checkpoints.
  std::string network_section() const;
  /// Starts from desk defaults; keys present in `text` override them.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies one "section.key=value" override.
  void set(const std::string& assignment);

  bool operator==(const RunConfig&) const = default;
};

std::string to_string(boxloss::CiouForm form);
boxloss::CiouForm parse_ciou_form(const std::string& text);

}  // namespace appledet::cli
