#include "appledet/cli/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>

#include "appledet/boxloss/decode.hpp"
#include "appledet/cli/checkpoint.hpp"
#include "appledet/common/error.hpp"
#include "appledet/data/dataset.hpp"
#include "appledet/evalkit/heatmap.hpp"
#include "appledet/evalkit/nms.hpp"

namespace appledet::cli {

namespace fs = std::filesystem;
using boxloss::Detection;

tensor::Tensor batch_tensor(const std::vector<const data::Image*>& images) {
  require(!images.empty(), "batch_tensor: empty batch");
  const int w = images[0]->width, h = images[0]->height;
  std::vector<double> values(images.size() * 3 * static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i]->width == w && images[i]->height == h && images[i]->channels == 3,
            "batch_tensor: images in a batch must be RGB and equally sized");
    data::to_planar(*images[i], values.data() + i * 3 * static_cast<std::size_t>(w) * h);
  }
  return tensor::Tensor::from_data({static_cast<int>(images.size()), 3, h, w}, std::move(values));
}

std::vector<Detection> infer(blocks::LayerGraph& graph, const tensor::Tensor& batch,
                             const InferenceSettings& settings) {
  tensor::NoGradGuard no_grad;
  const auto out = graph.forward(batch, tensor::Mode::eval);
  const double W = batch.shape().w, H = batch.shape().h;
  std::vector<Detection> raw;
  for (std::size_t level = 0; level < out.heads.size(); ++level) {
    auto dets = boxloss::decode_boxes(out.heads[level], graph.spec(), static_cast<int>(level),
                                      {settings.conf_floor, true});
    for (auto& d : dets) {
      const double x1 = std::clamp(d.box.x1(), 0.0, W), x2 = std::clamp(d.box.x2(), 0.0, W);
      const double y1 = std::clamp(d.box.y1(), 0.0, H), y2 = std::clamp(d.box.y2(), 0.0, H);
      if (!(x2 > x1 && y2 > y1)) continue;
      d.box = boxloss::Box::from_corners(x1, y1, x2, y2, d.box.class_id);
      raw.push_back(d);
    }
  }
  auto kept = evalkit::nms(raw, settings.nms_iou, settings.conf_floor);
  std::vector<Detection> capped;
  std::map<int, std::size_t> per_image;
  for (const auto& d : kept) {
    if (per_image[d.image_id]++ < settings.max_detections) capped.push_back(d);
  }
  return capped;
}

SetEvaluation evaluate_scenes(blocks::LayerGraph& graph, const std::vector<data::Scene>& scenes,
                              const RunConfig& config, int batch_size) {
  require(batch_size >= 1, "evaluate: batch size must be >= 1");
  SetEvaluation ev;
  ev.images = static_cast<int>(scenes.size());
  const int multiple = graph.spec().max_stride();
  std::vector<data::Letterbox> boxed;
  std::vector<boxloss::GroundTruth> truths;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    boxed.push_back(data::letterbox(scenes[i].image, multiple));
    ev.letterboxed += boxed.back().padded;
    for (auto b : scenes[i].truths) {
      b.cx += boxed.back().pad_left;
      b.cy += boxed.back().pad_top;
      truths.push_back({b, static_cast<int>(i)});
    }
  }
  const InferenceSettings settings{config.conf_floor, config.nms_iou, 300};
  double seconds = 0.0;
  for (std::size_t start = 0; start < boxed.size();) {
    std::vector<const data::Image*> images{&boxed[start].image};
    std::size_t end = start + 1;
    while (end < boxed.size() && end - start < static_cast<std::size_t>(batch_size) &&
           boxed[end].image.width == boxed[start].image.width &&
           boxed[end].image.height == boxed[start].image.height) {
      images.push_back(&boxed[end++].image);
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto dets = infer(graph, batch_tensor(images), settings);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& d : dets) {
      d.image_id += static_cast<int>(start);
      ev.detections.push_back(d);
    }
    start = end;
  }
  ev.seconds_per_image = scenes.empty() ? 0.0 : seconds / static_cast<double>(scenes.size());
  ev.fps = ev.seconds_per_image > 0.0 ? 1.0 / ev.seconds_per_image : 0.0;
  ev.report = evalkit::evaluate_detections(
      ev.detections, truths,
      {graph.spec().num_classes, config.match_iou, config.conf_threshold});
  std::vector<Detection> operating;
  for (const auto& d : ev.detections) {
    if (d.confidence >= config.conf_threshold) operating.push_back(d);
  }
  ev.counts = evalkit::accuracy_count(operating, truths, graph.spec().num_classes);
  return ev;
}

namespace {

const char* class_name(int c) { return c == boxloss::kApple ? "apple" : "block"; }

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string pct(const std::optional<double>& v) { return v.has_value() ? pct(v.value_or(0.0)) : "n/a"; }

}  // namespace

std::string format_report(const SetEvaluation& ev, const std::string& model, double weight_mb) {
  const auto& r = ev.report;
  const bool has_block = r.classes.size() > boxloss::kBlock && r.classes[boxloss::kBlock].ap;
  const std::string ap_block = has_block ? pct(*r.classes[boxloss::kBlock].ap) : "n/a";
  char buf[256];
  std::string out;
  out += "Models\tmAP (%)\tAP(Block) (%)\tF1 (%)\tDetection speed (FPS)\tWeight size (Mb)\n";
  std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%s\t%.2f\t%.2f\n", model.c_str(), pct(r.map).c_str(),
                ap_block.c_str(), pct(r.mean.f1).c_str(), ev.fps, weight_mb);
  out += buf;
  out += "\nCategory\tApple (%)\tBlock (%)\tMean (%)\n";
  const auto row = [&](const char* name, auto get) {
    out += name;
    for (const auto& c : r.classes) out += "\t" + (c.truths > 0 ? pct(get(c.prf)) : std::string("n/a"));
    out += "\t" + pct(get(r.mean)) + "\n";
  };
  row("Precision", [](const evalkit::PrF1& p) { return p.precision; });
  row("Recall", [](const evalkit::PrF1& p) { return p.recall; });
  row("F1", [](const evalkit::PrF1& p) { return p.f1; });
  out += "\nCategory";
  for (const auto& c : ev.counts) out += std::string("\t") + (c.class_id == 0 ? "Apple" : "Block");
  out += "\nGround truth";
  for (const auto& c : ev.counts) out += "\t" + std::to_string(c.truths);
  out += "\nDetection results";
  for (const auto& c : ev.counts) out += "\t" + std::to_string(c.detections);
  out += "\nAccuracy";
  for (const auto& c : ev.counts) out += "\t" + (c.ratio ? pct(c.ratio) + "%" : std::string("n/a"));
  out += "\n\n";
  for (const auto& c : r.classes) {
    std::snprintf(buf, sizeof buf, "ap50_%s\t%s\n", class_name(c.class_id), pct(c.ap).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "latency_seconds_per_image\t%.6f\nfps\t%.3f\nimages\t%d\n",
                ev.seconds_per_image, ev.fps, ev.images);
  out += buf;
  out += "letterboxed_images\t" + std::to_string(ev.letterboxed) +
         (ev.letterboxed ? "\t(padded with 114 to a stride multiple)\n" : "\n");
  for (const auto& w : r.warnings) out += "warning\t" + w + "\n";
  return out;
}

EvalOutputs cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out_dir,
                     const RunConfig& base, const std::string& split, int heatmap_images) {
  require(split == "train" || split == "test", "eval: split must be train or test");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  RunConfig config = base;
  config.network = RunConfig::parse(ckpt.network).network;
  config.validate();
  require(config.network.num_classes == boxloss::kNumClasses,
          "eval: checkpoint predicts " + std::to_string(config.network.num_classes) +
              " classes, the dataset has " + std::to_string(boxloss::kNumClasses));
  auto graph = blocks::LayerGraph::build(config.network, {config.seed, true});
  restore(ckpt, *graph);

  const auto ds = data::Dataset::open(dataset);
  const auto entries = ds.split(split == "train" ? data::Split::train : data::Split::test);
  require(!entries.empty(), "eval: the " + split + " split of " + dataset.string() + " is empty");
  std::vector<data::Scene> scenes;
  for (const auto& e : entries) scenes.push_back(ds.load(e));

  fs::create_directories(out_dir);
  config.save(out_dir / "config.txt");
  EvalOutputs out;
  out.evaluation = evaluate_scenes(*graph, scenes, config, 1);
  const double weight_mb = 4.0 * static_cast<double>(graph->parameter_count()) / (1024.0 * 1024.0);
  out.report = out_dir / "report.txt";
  {
    std::ofstream f(out.report);
    f << format_report(out.evaluation, blocks::to_string(config.network.variant), weight_mb);
  }
  for (const auto& c : out.evaluation.report.classes) {
    const fs::path p = out_dir / (std::string("pr_") + class_name(c.class_id) + ".txt");
    evalkit::write_pr_table(p, c.curve);
    out.pr_tables.push_back(p);
  }
  for (int i = 0; i < std::min<int>(heatmap_images, static_cast<int>(scenes.size())); ++i) {
    const auto boxed = data::letterbox(scenes[i].image, config.network.max_stride());
    tensor::NoGradGuard no_grad;
    const auto fwd = graph->forward(batch_tensor({&boxed.image}), tensor::Mode::eval);
    for (int stride : config.network.strides) {
      const std::string key = "head_input.s" + std::to_string(stride);
      const fs::path p = out_dir / ("heatmap_" + entries[i].stem + "_s" + std::to_string(stride) + ".pgm");
      evalkit::export_heatmap(fwd.features.at(key), 0, boxed.image.width, boxed.image.height, p);
      out.heatmaps.push_back(p);
    }
  }
  return out;
}

}  // namespace appledet::cli
