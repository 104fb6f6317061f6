#include "appledet/cli/detect.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "appledet/blocks/network.hpp"
#include "appledet/cli/checkpoint.hpp"
#include "appledet/cli/evaluate.hpp"
#include "appledet/common/error.hpp"
#include "appledet/data/netpbm.hpp"
#include "appledet/evalkit/heatmap.hpp"

namespace appledet::cli {

namespace fs = std::filesystem;

namespace {

std::unique_ptr<blocks::LayerGraph> load_graph(const fs::path& checkpoint, RunConfig& config) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  config.network = RunConfig::parse(ckpt.network).network;
  config.validate();
  auto graph = blocks::LayerGraph::build(config.network, {config.seed, true});
  restore(ckpt, *graph);
  return graph;
}

}  // namespace

DetectOutputs cmd_detect(const fs::path& checkpoint, const fs::path& image_path,
                         const fs::path& out_dir, const RunConfig& base) {
  RunConfig config = base;
  auto graph = load_graph(checkpoint, config);
  const data::Image image = data::read_netpbm(image_path);
  require(image.channels == 3, "detect: " + image_path.string() + " is not an RGB (P6) image");
  const auto boxed = data::letterbox(image, config.network.max_stride());

  DetectOutputs out;
  const InferenceSettings settings{config.conf_threshold, config.nms_iou, 300};
  for (auto d : infer(*graph, batch_tensor({&boxed.image}), settings)) {
    const double x1 = std::clamp(d.box.x1() - boxed.pad_left, 0.0, double(image.width));
    const double x2 = std::clamp(d.box.x2() - boxed.pad_left, 0.0, double(image.width));
    const double y1 = std::clamp(d.box.y1() - boxed.pad_top, 0.0, double(image.height));
    const double y2 = std::clamp(d.box.y2() - boxed.pad_top, 0.0, double(image.height));
    if (!(x2 > x1 && y2 > y1)) continue;
    d.box = boxloss::Box::from_corners(x1, y1, x2, y2, d.box.class_id);
    out.detections.push_back(d);
  }

  fs::create_directories(out_dir);
  config.save(out_dir / "config.txt");
  const std::string stem = image_path.stem().string();
  out.list = out_dir / (stem + "_detections.txt");
  out.annotated = out_dir / (stem + "_annotated.ppm");
  std::ofstream list(out.list);
  if (!list) throw InvalidInput("detect: cannot write " + out.list.string());
  data::Image annotated = image;
  char line[128];
  for (const auto& d : out.detections) {
    std::snprintf(line, sizeof line, "%d %.6f %.2f %.2f %.2f %.2f\n", d.box.class_id, d.confidence,
                  d.box.x1(), d.box.y1(), d.box.x2(), d.box.y2());
    list << line;
    if (d.box.class_id == boxloss::kApple) {
      data::draw_rectangle(annotated, d.box, 0, 255, 0);
    } else {
      data::draw_rectangle(annotated, d.box, 255, 0, 0);
    }
  }
  data::write_netpbm(out.annotated, annotated);
  return out;
}

std::string cmd_heatmap(const fs::path& checkpoint, const fs::path& image_path,
                        const std::string& layer, const fs::path& out, const RunConfig& base) {
  RunConfig config = base;
  auto graph = load_graph(checkpoint, config);
  const data::Image image = data::read_netpbm(image_path);
  const auto boxed = data::letterbox(image, config.network.max_stride());
  tensor::NoGradGuard no_grad;
  const auto fwd = graph->forward(batch_tensor({&boxed.image}), tensor::Mode::eval);
  const auto it = fwd.features.find(layer);
  if (it == fwd.features.end()) {
    std::string names;
    for (const auto& [name, t] : fwd.features) names += " " + name;
    throw InvalidInput("heatmap: unknown layer '" + layer + "'; available:" + names);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  return evalkit::export_heatmap(it->second, 0, boxed.image.width, boxed.image.height, out).warning;
}

}  // namespace appledet::cli
