#include "appledet/cli/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "appledet/boxloss/detection_loss.hpp"
#include "appledet/boxloss/targets.hpp"
#include "appledet/cli/checkpoint.hpp"
#include "appledet/cli/evaluate.hpp"
#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"
#include "appledet/data/dataset.hpp"
#include "appledet/data/labels.hpp"
#include "appledet/tensor/ops.hpp"

namespace appledet::cli {

namespace fs = std::filesystem;

void sgd_step(const std::vector<tensor::Parameter*>& params, const SgdSettings& s) {
  for (auto* p : params) {
    const auto g = p->value.grad();
    if (g.empty()) continue;
    auto theta = p->value.data();
    const double decay = p->decay ? s.weight_decay : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      p->momentum[i] = s.momentum * p->momentum[i] + g[i] + decay * theta[i];
      theta[i] -= s.learning_rate * p->momentum[i];
    }
  }
}

std::string format_metrics_header() { return "epoch\tbox\tcls\tobj\ttotal\tmap50\tseconds\n"; }

std::string format_metrics(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.2f\n", m.epoch, m.box, m.cls,
                m.obj, m.total, m.map50, m.seconds);
  return buf;
}

namespace {

struct Sample {
  std::vector<double> planar;  // 3 x h x w
  std::vector<boxloss::Box> truths;  // normalized
};

// Horizontal flip of the planar image and its truths.
void flip(Sample& s, int w, int h) {
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      double* row = s.planar.data() + (static_cast<std::size_t>(c) * h + y) * w;
      std::reverse(row, row + w);
    }
  }
  for (auto& b : s.truths) b.cx = 1.0 - b.cx;
}

double learning_rate(const RunConfig& c, int epoch) {
  if (c.lr_schedule == "constant") return c.learning_rate;
  constexpr double kFinalFraction = 0.01;
  const double t = static_cast<double>(epoch) / c.epochs;
  return c.learning_rate * ((1.0 - std::cos(std::numbers::pi * t)) / 2.0 * (kFinalFraction - 1.0) + 1.0);
}

}  // namespace

TrainResult train(const RunConfig& config, const std::vector<data::Scene>& train_scenes,
                  const std::vector<data::Scene>& val_scenes, const TrainOptions& options) {
  config.validate();
  require(!train_scenes.empty(), "train: empty training set");
  const auto& spec = config.network;
  const int multiple = spec.max_stride();

  std::vector<Sample> samples;
  int W = 0, H = 0;
  for (const auto& scene : train_scenes) {
    const auto boxed = data::letterbox(scene.image, multiple);
    if (samples.empty()) {
      W = boxed.image.width;
      H = boxed.image.height;
    }
    require(boxed.image.width == W && boxed.image.height == H,
            "train: all training images must share one size");
    Sample s;
    s.planar.resize(3 * static_cast<std::size_t>(W) * H);
    data::to_planar(boxed.image, s.planar.data());
    for (auto b : scene.truths) {
      b.cx += boxed.pad_left;
      b.cy += boxed.pad_top;
      s.truths.push_back(data::to_normalized(b, W, H));
    }
    samples.push_back(std::move(s));
  }

  TrainResult result;
  result.graph = blocks::LayerGraph::build(spec, {config.seed, true});
  auto& graph = *result.graph;
  const auto params = graph.parameters();
  const std::string network_text = config.network_section();

  std::ofstream metrics_log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    config.save(options.out_dir / "config.txt");
    metrics_log.open(options.out_dir / "metrics.tsv");
    metrics_log << format_metrics_header();
  }

  boxloss::LossConfig loss_config;
  loss_config.coefficients = config.coefficients;
  loss_config.ciou_form = config.ciou_form;
  loss_config.iou_scaled_objectness = config.iou_scaled_objectness;
  loss_config.objectness_balance = config.objectness_balance;

  Rng order_rng(mix_seed(config.seed, 0x0de7));
  Rng aug_rng(mix_seed(config.seed, 0xf11b));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.integer(0, static_cast<int>(i) - 1))]);
    }
    const SgdSettings sgd{learning_rate(config, epoch - 1), config.momentum, config.weight_decay};
    EpochMetrics m;
    m.epoch = epoch;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const int n = static_cast<int>(end - start);
      std::vector<double> values;
      values.reserve(static_cast<std::size_t>(n) * 3 * W * H);
      std::vector<std::vector<boxloss::Box>> truths;
      for (std::size_t k = start; k < end; ++k) {
        Sample s = samples[order[k]];
        if (config.online_augment && aug_rng.bernoulli(0.5)) flip(s, W, H);
        values.insert(values.end(), s.planar.begin(), s.planar.end());
        truths.push_back(std::move(s.truths));
      }
      const auto input = tensor::Tensor::from_data({n, 3, H, W}, std::move(values));
      const auto targets = boxloss::assign_targets(truths, spec, H, W);
      const auto forward = graph.forward(input, tensor::Mode::train);
      boxloss::LossBreakdown loss;
      try {
        loss = boxloss::detection_loss(forward.heads, targets, spec, loss_config);
      } catch (const NumericalError& e) {
        throw NumericalError("train: step " + std::to_string(result.steps) + " (epoch " +
                             std::to_string(epoch) + "): " + e.what());
      }
      graph.zero_grad();
      const double factor = config.loss_scale == "batch" ? n : 1.0;
      tensor::scale(loss.total, factor).backward();
      sgd_step(params, sgd);
      graph.apply_storage_precision();
      ++result.steps;
      m.box += loss.box;
      m.cls += loss.cls;
      m.obj += loss.obj;
      m.total += loss.total_value;
      ++batches;
    }
    m.box /= batches;
    m.cls /= batches;
    m.obj /= batches;
    m.total /= batches;
    if (options.evaluate_each_epoch && !val_scenes.empty()) {
      m.map50 = evaluate_scenes(graph, val_scenes, config, config.batch_size).report.map;
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(m);
    if (!options.out_dir.empty()) {
      metrics_log << format_metrics(m) << std::flush;
      const auto ckpt = capture(graph, network_text, result.steps, static_cast<std::uint32_t>(epoch));
      save_checkpoint(options.out_dir / "last.ckpt", ckpt);
      if (options.keep_epoch_checkpoints) {
        save_checkpoint(options.out_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), ckpt);
      }
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  return result;
}

TrainResult cmd_train(const RunConfig& config, const fs::path& dataset, const fs::path& out_dir) {
  const auto ds = data::Dataset::open(dataset);
  const auto train_scenes = ds.load_split(data::Split::train);
  require(!train_scenes.empty(), "train: dataset " + dataset.string() + " has no training samples");
  const auto val_scenes = ds.load_split(data::Split::test);
  TrainOptions options;
  options.out_dir = out_dir;
  return train(config, train_scenes, val_scenes, options);
}

}  // namespace appledet::cli
