#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "appledet/cli/config.hpp"
#include "appledet/cli/detect.hpp"
#include "appledet/cli/evaluate.hpp"
#include "appledet/cli/gradcheck_suite.hpp"
#include "appledet/cli/trainer.hpp"
#include "appledet/common/error.hpp"
#include "appledet/data/dataset.hpp"

namespace fs = std::filesystem;
using namespace appledet;

namespace {

// Flags shared by every subcommand: a base config file, a profile, and
// section.key=value overrides applied last.
struct ConfigFlags {
  std::string file;
  std::string profile = "desk";
  std::vector<std::string> overrides;
  // Shorthands for the most used config keys, applied before --set.
  std::vector<std::pair<std::string, std::string>> shorthands = {
      {"variant", "network.variant"},         {"width", "network.width_multiple"},
      {"depth", "network.depth_multiple"},    {"lr", "optimizer.learning_rate"},
      {"ciou-form", "loss.ciou_form"},        {"epochs", "training.epochs"},
      {"batch-size", "training.batch_size"},  {"image-size", "training.image_size"},
      {"seed", "training.seed"},              {"conf", "eval.conf_threshold"},
  };
  std::vector<std::string> values = std::vector<std::string>(shorthands.size());

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Run config file (sectioned key = value)");
    app->add_option("--profile", profile, "Defaults profile: desk or full")->capture_default_str();
    for (std::size_t i = 0; i < shorthands.size(); ++i) {
      app->add_option("--" + shorthands[i].first, values[i], "Sets " + shorthands[i].second);
    }
    app->add_option("--set", overrides, "Override, e.g. --set training.epochs=5")->take_all();
  }

  cli::RunConfig resolve() const {
    cli::RunConfig c = file.empty() ? cli::RunConfig::defaults(cli::parse_profile(profile))
                                    : cli::RunConfig::load(file);
    for (std::size_t i = 0; i < shorthands.size(); ++i) {
      if (!values[i].empty()) c.set(shorthands[i].second + "=" + values[i]);
    }
    for (const auto& o : overrides) c.set(o);
    return c;
  }
};

void print_epoch(const cli::EpochMetrics& m) { std::cout << cli::format_metrics(m) << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Apple and occluded-apple (block) detector: data, training and evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  ConfigFlags gen_cfg;
  gen_cfg.attach(gen);
  std::string gen_out;
  int gen_scenes = -1, gen_test = -1;
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--scenes", gen_scenes, "Total scenes (split by data.train_fraction)");
  gen->add_option("--test-scenes", gen_test, "Explicit held-out count; --scenes become training");

  // augment
  auto* aug = app.add_subcommand("augment", "Expand a dataset with the eight augmentations");
  ConfigFlags aug_cfg;
  aug_cfg.attach(aug);
  std::string aug_in, aug_out, aug_split = "train";
  aug->add_option("--data", aug_in, "Source dataset directory")->required();
  aug->add_option("--out", aug_out, "Output dataset directory")->required();
  aug->add_option("--split", aug_split, "train, test or all")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a detector");
  ConfigFlags tr_cfg;
  tr_cfg.attach(tr);
  std::string tr_data, tr_out;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Run directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ConfigFlags ev_cfg;
  ev_cfg.attach(ev);
  std::string ev_ckpt, ev_data, ev_out, ev_split = "test";
  int ev_heatmaps = 1;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--out", ev_out, "Report directory")->required();
  ev->add_option("--split", ev_split, "train or test")->capture_default_str();
  ev->add_option("--heatmaps", ev_heatmaps, "Images to export head-input heat maps for")
      ->capture_default_str();

  // detect
  auto* det = app.add_subcommand("detect", "Detect apples and blocks in one image");
  ConfigFlags det_cfg;
  det_cfg.attach(det);
  std::string det_ckpt, det_image, det_out;
  det->add_option("--checkpoint", det_ckpt, "Checkpoint file")->required();
  det->add_option("--image", det_image, "Binary PPM image")->required();
  det->add_option("--out", det_out, "Output directory")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks of every block");
  ConfigFlags gc_cfg;
  gc_cfg.attach(gc);
  std::string gc_out = ".";
  int gc_cases = 10;
  gc->add_option("--out", gc_out, "Directory for gradcheck.txt and config.txt")->capture_default_str();
  gc->add_option("--cases", gc_cases, "Random shapes per block")->capture_default_str();

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "Export a feature-map heat map as PGM");
  ConfigFlags hm_cfg;
  hm_cfg.attach(hm);
  std::string hm_ckpt, hm_image, hm_layer = "head_input.s8", hm_out;
  hm->add_option("--checkpoint", hm_ckpt, "Checkpoint file")->required();
  hm->add_option("--image", hm_image, "Binary PPM image")->required();
  hm->add_option("--layer", hm_layer, "Feature map name")->capture_default_str();
  hm->add_option("--out", hm_out, "Output PGM path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      cli::RunConfig c = gen_cfg.resolve();
      if (gen_scenes >= 0) c.scenes = gen_scenes;
      c.validate();
      data::GenerateOptions opt;
      opt.counts = gen_test >= 0 ? data::SplitCounts{c.scenes, gen_test}
                                 : data::split_counts(c.scenes, c.train_fraction);
      opt.seed = c.seed;
      opt.scene.size = c.image_size;
      opt.scene.occluder_density = c.occluder_density;
      opt.scene.min_objects = c.min_objects;
      opt.scene.max_objects = c.max_objects;
      const auto ds = data::generate_dataset(gen_out, opt);
      c.save(fs::path(gen_out) / "config.txt");
      std::cout << "wrote " << ds.entries().size() << " scenes (" << opt.counts.train
                << " train, " << opt.counts.test << " test) to " << gen_out << "\n";
    } else if (*aug) {
      const cli::RunConfig c = aug_cfg.resolve();
      c.validate();
      std::vector<data::Split> splits;
      if (aug_split == "train" || aug_split == "all") splits.push_back(data::Split::train);
      if (aug_split == "test" || aug_split == "all") splits.push_back(data::Split::test);
      require(!splits.empty(), "augment: --split must be train, test or all");
      const auto report = data::dataset_expand(data::Dataset::open(aug_in), aug_out, c.seed, splits);
      c.save(fs::path(aug_out) / "config.txt");
      for (const auto& line : report.log) std::cout << line << "\n";
      for (const auto& line : report.failures) std::cerr << "failed: " << line << "\n";
      std::cout << report.sources << " sources -> " << report.variants << " augmented variants + "
                << report.originals << " originals in " << aug_out << "\n";
    } else if (*tr) {
      const cli::RunConfig c = tr_cfg.resolve();
      c.validate();
      const auto ds = data::Dataset::open(tr_data);
      const auto train_scenes = ds.load_split(data::Split::train);
      require(!train_scenes.empty(), "train: dataset " + tr_data + " has no training samples");
      cli::TrainOptions opt;
      opt.out_dir = tr_out;
      opt.on_epoch = print_epoch;
      std::cout << cli::format_metrics_header();
      cli::train(c, train_scenes, ds.load_split(data::Split::test), opt);
      std::cout << "checkpoint: " << (fs::path(tr_out) / "last.ckpt").string() << "\n";
    } else if (*ev) {
      const auto out = cli::cmd_eval(ev_ckpt, ev_data, ev_out, ev_cfg.resolve(), ev_split, ev_heatmaps);
      std::ifstream report(out.report);
      std::cout << report.rdbuf();
    } else if (*det) {
      const auto out = cli::cmd_detect(det_ckpt, det_image, det_out, det_cfg.resolve());
      std::cout << out.detections.size() << " detections -> " << out.list.string() << ", "
                << out.annotated.string() << "\n";
    } else if (*gc) {
      const cli::RunConfig c = gc_cfg.resolve();
      cli::GradCheckSuiteOptions opt;
      opt.seed = c.seed;
      opt.cases_per_block = gc_cases;
      const auto entries = cli::run_gradcheck_suite(opt);
      const std::string table = cli::format_gradcheck_table(entries);
      fs::create_directories(gc_out);
      c.save(fs::path(gc_out) / "config.txt");
      std::ofstream(fs::path(gc_out) / "gradcheck.txt") << table;
      std::cout << table;
      for (const auto& e : entries) {
        if (!e.passed()) return 2;
      }
    } else if (*hm) {
      const cli::RunConfig c = hm_cfg.resolve();
      const std::string warning = cli::cmd_heatmap(hm_ckpt, hm_image, hm_layer, hm_out, c);
      c.save(fs::path(hm_out).string() + ".config.txt");
      if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
      std::cout << "wrote " << hm_out << "\n";
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
