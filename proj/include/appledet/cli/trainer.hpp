#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "appledet/blocks/network.hpp"
#include "appledet/cli/config.hpp"
#include "appledet/data/scene.hpp"

namespace appledet::cli {

struct SgdSettings {
  double learning_rate = 0.01;
  double momentum = 0.937;
  double weight_decay = 0.0005;
};

/// v <- mu v + g + lambda theta (decay only where Parameter::decay is set);
/// theta <- theta - lr v. Parameters without a gradient are left alone.
void sgd_step(const std::vector<tensor::Parameter*>& params, const SgdSettings& s);

struct EpochMetrics {
  int epoch = 0;
  double box = 0.0;  // mean over the epoch's batches, unweighted components
  double cls = 0.0;
  double obj = 0.0;
  double total = 0.0;
  double map50 = -1.0;  // on the validation scenes, -1 when not evaluated
  double seconds = 0.0;
};

std::string format_metrics_header();
std::string format_metrics(const EpochMetrics& m);

struct TrainOptions {
  /// When set: config.txt, metrics.tsv, last.ckpt and epoch_<k>.ckpt go here.
  std::filesystem::path out_dir;
  bool keep_epoch_checkpoints = false;
  bool evaluate_each_epoch = true;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<blocks::LayerGraph> graph;
  std::vector<EpochMetrics> epochs;
  std::uint64_t steps = 0;
};

/// Deterministic in (config, scenes). Throws NumericalError naming the step
/// and loss component when the loss turns non-finite.
TrainResult train(const RunConfig& config, const std::vector<data::Scene>& train_scenes,
                  const std::vector<data::Scene>& val_scenes, const TrainOptions& options = {});

/// Opens the dataset, trains on its train split and validates on the test
/// split.
TrainResult cmd_train(const RunConfig& config, const std::filesystem::path& dataset,
                      const std::filesystem::path& out_dir);

}  // namespace appledet::cli
