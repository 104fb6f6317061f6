#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "appledet/blocks/network.hpp"
#include "appledet/cli/config.hpp"
#include "appledet/data/scene.hpp"
#include "appledet/evalkit/metrics.hpp"

namespace appledet::cli {

/// Stacks equally sized RGB images into (n, 3, h, w) with values in [0, 1].
tensor::Tensor batch_tensor(const std::vector<const data::Image*>& images);

struct InferenceSettings {
  double conf_floor = 0.001;
  double nms_iou = 0.45;
  std::size_t max_detections = 300;  // per image, after NMS
};

/// Eval-mode forward, decode over every head, NMS per image. image_id is the
/// position within the batch.
std::vector<boxloss::Detection> infer(blocks::LayerGraph& graph, const tensor::Tensor& batch,
                                      const InferenceSettings& settings);

struct SetEvaluation {
  evalkit::EvaluationReport report;
  std::vector<evalkit::CountAccuracy> counts;  // at the operating confidence
  std::vector<boxloss::Detection> detections;  // letterboxed frame, image_id = scene index
  double seconds_per_image = 0.0;
  double fps = 0.0;
  int images = 0;
  int letterboxed = 0;  // images padded to a stride multiple
};

/// Scenes are letterboxed (pad 114) to the largest stride when needed, with
/// truths shifted accordingly. Latency is measured per image at batch 1 when
/// batch_size is 1.
SetEvaluation evaluate_scenes(blocks::LayerGraph& graph, const std::vector<data::Scene>& scenes,
                              const RunConfig& config, int batch_size = 1);

/// Table-shaped summaries: detector row (mAP, AP(Block), F1, FPS, weight
/// size), per-class P/R/F1 with the mean, and truth/detection counts.
std::string format_report(const SetEvaluation& eval, const std::string& model_name,
                          double weight_megabytes);

struct EvalOutputs {
  SetEvaluation evaluation;
  std::vector<std::filesystem::path> pr_tables;
  std::vector<std::filesystem::path> heatmaps;
  std::filesystem::path report;
};

/// Evaluates a checkpoint on a dataset split and writes report.txt,
/// pr_<class>.txt, heat maps for the first `heatmap_images` scenes and the
/// resolved config into `out_dir`.
EvalOutputs cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                     const std::filesystem::path& out_dir, const RunConfig& config,
                     const std::string& split = "test", int heatmap_images = 1);

}  // namespace appledet::cli
