#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "appledet/cli/checkpoint.hpp"
#include "appledet/cli/config.hpp"
#include "appledet/cli/detect.hpp"
#include "appledet/cli/evaluate.hpp"
#include "appledet/cli/trainer.hpp"
#include "appledet/common/error.hpp"
#include "appledet/data/dataset.hpp"
#include "appledet/data/netpbm.hpp"
#include "appledet/evalkit/heatmap.hpp"

using namespace appledet;
using namespace appledet::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

tensor::Tensor random_batch(Rng& rng, int n, int size) {
  std::vector<double> v(static_cast<std::size_t>(n) * 3 * size * size);
  for (double& x : v) x = rng.uniform();
  return tensor::Tensor::from_data({n, 3, size, size}, std::move(v));
}

fs::path untrained_checkpoint(const RunConfig& config, const fs::path& dir) {
  auto graph = blocks::LayerGraph::build(config.network, {config.seed, true});
  const fs::path path = dir / "untrained.ckpt";
  save_checkpoint(path, capture(*graph, config.network_section(), 0, 0));
  return path;
}

RunConfig tiny_config() {
  RunConfig c = RunConfig::defaults();
  c.epochs = 2;
  c.batch_size = 2;
  return c;
}

}  // namespace

TEST(Config, DefaultsFollowTrainingTable) {
  const RunConfig c = RunConfig::defaults();
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.momentum, 0.937);
  EXPECT_EQ(c.weight_decay, 0.0005);
  EXPECT_EQ(c.coefficients.box, 0.05);
  EXPECT_EQ(c.coefficients.cls, 0.5);
  EXPECT_EQ(c.coefficients.obj, 1.0);
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.image_size, 64);
  EXPECT_EQ(c.network.variant, blocks::Variant::yolov5s_bc);
  EXPECT_EQ(c.ciou_form, boxloss::CiouForm::squared);

  const RunConfig full = RunConfig::defaults(Profile::full);
  EXPECT_EQ(full.epochs, 200);
  EXPECT_EQ(full.batch_size, 16);
  EXPECT_EQ(full.image_size, 640);
  EXPECT_EQ(full.learning_rate, 0.01);
}

TEST(Config, RoundTripsAndOverrides) {
  RunConfig c = RunConfig::defaults();
  EXPECT_EQ(RunConfig::parse(c.serialize()), c);
  EXPECT_EQ(RunConfig::parse(c.serialize()).serialize(), c.serialize());

  c.set("optimizer.learning_rate=0.003");
  c.set("loss.ciou_form = unsquared");
  c.set("network.variant=yolov5s");
  c.set("loss.objectness_balance=4,1,0.4");
  c.set("training.seed=12345678901");
  EXPECT_EQ(c.learning_rate, 0.003);
  EXPECT_EQ(c.network.strides, (std::vector<int>{8, 16, 32}));
  EXPECT_EQ(c.network.anchors.size(), 3u);
  EXPECT_EQ(RunConfig::parse(c.serialize()), c);

  EXPECT_THROW(c.set("optimizer.learning_rate"), InvalidInput);
  EXPECT_THROW(c.set("optimizer.nope=1"), InvalidInput);
  EXPECT_THROW(c.set("training.epochs=ten"), InvalidInput);
  EXPECT_THROW(RunConfig::parse("[training]\nepochs = 3\nbogus line\n"), InvalidInput);
  RunConfig bad = RunConfig::defaults();
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), InvalidInput);
  EXPECT_THROW(parse_profile("huge"), InvalidInput);
}

TEST(Config, NetworkSectionParsesBack) {
  RunConfig c = RunConfig::defaults();
  c.set("network.width_multiple=0.5");
  EXPECT_EQ(RunConfig::parse(c.network_section()).network, c.network);
}

TEST(Sgd, QuadraticStepAndFrozenParameters) {
  tensor::Parameter theta("theta", {1, 1, 1, 1});
  theta.value.data()[0] = 1.0;
  theta.value.set_requires_grad(true);
  tensor::scale(tensor::mul(theta.value, theta.value), 0.5).backward();
  sgd_step({&theta}, {0.01, 0.937, 0.0});
  EXPECT_DOUBLE_EQ(theta.value.data()[0], 0.99);

  auto graph = blocks::LayerGraph::build(blocks::NetworkSpec::make(blocks::Variant::yolov5s));
  std::vector<std::vector<double>> before;
  for (auto* p : graph->parameters()) before.emplace_back(p->value.data().begin(), p->value.data().end());
  Rng rng(1);
  for (int step = 0; step < 3; ++step) {
    graph->zero_grad();
    auto out = graph->forward(random_batch(rng, 2, 32), tensor::Mode::train);
    tensor::Tensor loss = tensor::sum(out.heads[0]);
    for (std::size_t i = 1; i < out.heads.size(); ++i) loss = tensor::add(loss, tensor::sum(out.heads[i]));
    loss.backward();
    sgd_step(graph->parameters(), {0.0, 0.937, 0.0});
  }
  auto params = graph->parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t k = 0; k < before[i].size(); ++k) EXPECT_EQ(params[i]->value.data()[k], before[i][k]);
}

TEST(Checkpoint, ReloadIsBitIdentical) {
  TempDir dir("appledet_ckpt");
  RunConfig config = RunConfig::defaults();
  auto graph = blocks::LayerGraph::build(config.network, {7, true});
  Rng rng(2);
  // Move the batchnorm statistics and momentum away from their initial state.
  graph->forward(random_batch(rng, 2, 64), tensor::Mode::train);
  graph->apply_storage_precision();
  save_checkpoint(dir.path / "a.ckpt", capture(*graph, config.network_section(), 5, 1));

  const Checkpoint loaded = load_checkpoint(dir.path / "a.ckpt");
  EXPECT_EQ(loaded.step, 5u);
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(encode_checkpoint(loaded))), encode_checkpoint(loaded));
  auto fresh = blocks::LayerGraph::build(RunConfig::parse(loaded.network).network, {99, true});
  restore(loaded, *fresh);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_batch(rng, 1, 64);
    const auto a = graph->forward(x, tensor::Mode::eval), b = fresh->forward(x, tensor::Mode::eval);
    for (std::size_t h = 0; h < a.heads.size(); ++h)
      for (std::size_t k = 0; k < a.heads[h].numel(); ++k) ASSERT_EQ(a.heads[h].data()[k], b.heads[h].data()[k]);
  }
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  RunConfig config = RunConfig::defaults();
  auto graph = blocks::LayerGraph::build(config.network);
  const std::string bytes = encode_checkpoint(capture(*graph, config.network_section(), 0, 0));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), InvalidInput);
  EXPECT_THROW(decode_checkpoint("NOTACKPT" + bytes.substr(8)), InvalidInput);
  auto baseline = blocks::LayerGraph::build(blocks::NetworkSpec::make(blocks::Variant::yolov5s));
  EXPECT_THROW(restore(decode_checkpoint(bytes), *baseline), InvalidInput);
}

TEST(Heatmap, SingleHotGivesStrideBlock) {
  tensor::Tensor f = tensor::Tensor::zeros({1, 3, 4, 4});
  f.at(0, 1, 1, 2) = -3.0;
  const auto hm = evalkit::feature_heatmap(f, 0, 16, 16);
  ASSERT_EQ(hm.image.width, 16);
  ASSERT_EQ(hm.image.height, 16);
  EXPECT_FALSE(hm.constant);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool inside = x >= 8 && x < 12 && y >= 4 && y < 8;
      EXPECT_EQ(hm.image.at(x, y, 0), inside ? 255 : 0) << x << "," << y;
    }
  const auto flat = evalkit::feature_heatmap(tensor::Tensor::zeros({1, 2, 2, 2}), 0, 8, 8);
  EXPECT_TRUE(flat.constant);
  EXPECT_FALSE(flat.warning.empty());
  for (auto p : flat.image.pixels) EXPECT_EQ(p, 0);
}

TEST(Detect, BlankImageUntrainedNetHighThreshold) {
  TempDir dir("appledet_detect");
  RunConfig config = RunConfig::defaults();
  config.conf_threshold = 0.9;
  const auto ckpt = untrained_checkpoint(config, dir.path);
  data::write_netpbm(dir.path / "blank.ppm", data::Image::rgb(64, 64, 0));
  const auto out = cmd_detect(ckpt, dir.path / "blank.ppm", dir.path / "out", config);
  EXPECT_TRUE(out.detections.empty());
  EXPECT_TRUE(fs::exists(out.list));
  EXPECT_EQ(fs::file_size(out.list), 0u);
  EXPECT_EQ(data::read_netpbm(out.annotated).width, 64);
}

TEST(Detect, RepeatableAndWithinBounds) {
  TempDir dir("appledet_detect2");
  RunConfig config = RunConfig::defaults();
  config.conf_threshold = 0.0;
  const auto ckpt = untrained_checkpoint(config, dir.path);
  const data::Image img = data::generate_scene(4, {.size = 64}).image;
  data::Image cropped = data::Image::rgb(60, 50);
  for (int y = 0; y < 50; ++y)
    for (int x = 0; x < 60; ++x)
      for (int c = 0; c < 3; ++c) cropped.at(x, y, c) = img.at(x, y, c);
  data::write_netpbm(dir.path / "scene.ppm", cropped);
  const auto a = cmd_detect(ckpt, dir.path / "scene.ppm", dir.path / "a", config);
  const auto b = cmd_detect(ckpt, dir.path / "scene.ppm", dir.path / "b", config);
  EXPECT_FALSE(a.detections.empty());
  EXPECT_EQ(slurp(a.list), slurp(b.list));
  EXPECT_TRUE(slurp(a.annotated) == slurp(b.annotated));
  for (const auto& d : a.detections) {
    EXPECT_LT(d.box.x1(), d.box.x2());
    EXPECT_LT(d.box.y1(), d.box.y2());
    EXPECT_GE(d.box.x1(), 0.0);
    EXPECT_GE(d.box.y1(), 0.0);
    EXPECT_LE(d.box.x2(), 60.0);
    EXPECT_LE(d.box.y2(), 50.0);
  }
  EXPECT_THROW(cmd_heatmap(ckpt, dir.path / "scene.ppm", "no.such.layer", dir.path / "h.pgm", config),
               InvalidInput);
}

TEST(Train, DeterministicAndLogged) {
  TempDir dir("appledet_train");
  std::vector<data::Scene> scenes;
  for (int i = 0; i < 4; ++i) scenes.push_back(data::generate_scene(mix_seed(11, i)));
  const RunConfig config = tiny_config();
  TrainOptions opt;
  opt.out_dir = dir.path / "a";
  const auto a = train(config, scenes, {scenes[0]}, opt);
  opt.out_dir = dir.path / "b";
  const auto b = train(config, scenes, {scenes[0]}, opt);
  ASSERT_EQ(a.epochs.size(), 2u);
  EXPECT_EQ(a.steps, 4u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(a.epochs[e].total, b.epochs[e].total);
    EXPECT_EQ(a.epochs[e].map50, b.epochs[e].map50);
  }
  auto strip_seconds = [](const std::string& log) {
    std::istringstream in(log);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind('\t')) + "\n";
    return out;
  };
  EXPECT_EQ(strip_seconds(slurp(dir.path / "a" / "metrics.tsv")),
            strip_seconds(slurp(dir.path / "b" / "metrics.tsv")));
  EXPECT_TRUE(slurp(dir.path / "a" / "last.ckpt") == slurp(dir.path / "b" / "last.ckpt"));
  EXPECT_EQ(RunConfig::load(dir.path / "a" / "config.txt"), config);
  EXPECT_THROW(train(config, {}, {}, {}), InvalidInput);
}

TEST(Eval, ReportAndTables) {
  TempDir dir("appledet_eval");
  data::GenerateOptions gen;
  gen.counts = {1, 3};
  gen.seed = 5;
  data::generate_dataset(dir.path / "ds", gen);
  RunConfig config = RunConfig::defaults();
  const auto ckpt = untrained_checkpoint(config, dir.path);
  const auto out = cmd_eval(ckpt, dir.path / "ds", dir.path / "eval", config);
  const std::string report = slurp(out.report);
  EXPECT_NE(report.find("mAP (%)\tAP(Block) (%)\tF1 (%)\tDetection speed (FPS)\tWeight size (Mb)"),
            std::string::npos);
  EXPECT_EQ(out.evaluation.images, 3);
  EXPECT_NEAR(out.evaluation.fps, 1.0 / out.evaluation.seconds_per_image, 1e-9);
  EXPECT_EQ(out.pr_tables.size(), 2u);
  ASSERT_FALSE(out.heatmaps.empty());
  const auto hm = data::read_netpbm(out.heatmaps[0]);
  EXPECT_EQ(hm.width, 64);
  EXPECT_EQ(hm.height, 64);
  EXPECT_TRUE(fs::exists(dir.path / "eval" / "config.txt"));
}
