#include "appledet/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"
#include "appledet/data/labels.hpp"
#include "appledet/data/netpbm.hpp"

namespace appledet::data {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<ManifestEntry> read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw InvalidInput("dataset: missing manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string stem, split;
    if (!(fields >> stem >> split) || (split != "train" && split != "test")) {
      throw InvalidInput(path.string() + " line " + std::to_string(line_no) +
                         ": expected '<stem> train|test'");
    }
    entries.push_back({stem, split == "train" ? Split::train : Split::test});
  }
  return entries;
}

void write_manifest(const fs::path& root, const std::vector<ManifestEntry>& entries) {
  fs::create_directories(root);
  std::ofstream out(root / "manifest.txt");
  if (!out) throw InvalidInput("dataset: cannot write manifest in " + root.string());
  for (const auto& e : entries) out << e.stem << ' ' << to_string(e.split) << '\n';
}

Dataset Dataset::open(const fs::path& root) {
  Dataset d;
  d.root_ = root;
  d.entries_ = read_manifest(root);
  return d;
}

std::vector<ManifestEntry> Dataset::split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries_) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

Scene Dataset::load(const ManifestEntry& entry) const {
  Scene scene;
  scene.image = read_netpbm(root_ / "images" / (entry.stem + ".ppm"));
  require(scene.image.channels == 3, "dataset: " + entry.stem + " is not an RGB image");
  for (const auto& b : read_labels(root_ / "labels" / (entry.stem + ".txt"))) {
    scene.truths.push_back(to_pixels(b, scene.image.width, scene.image.height));
  }
  return scene;
}

std::vector<Scene> Dataset::load_split(Split s) const {
  std::vector<Scene> out;
  for (const auto& e : split(s)) out.push_back(load(e));
  return out;
}

void write_sample(const fs::path& root, const std::string& stem, const Scene& scene) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  write_netpbm(root / "images" / (stem + ".ppm"), scene.image);
  std::vector<boxloss::Box> normalized;
  for (const auto& b : scene.truths) {
    normalized.push_back(to_normalized(b, scene.image.width, scene.image.height));
  }
  write_labels(root / "labels" / (stem + ".txt"), normalized);
}

SplitCounts split_counts(int total, double train_fraction) {
  require(total >= 0, "dataset: negative sample count");
  require(train_fraction >= 0.0 && train_fraction <= 1.0, "dataset: train fraction outside [0, 1]");
  const int train = static_cast<int>(std::lround(total * train_fraction));
  return {train, total - train};
}

Dataset generate_dataset(const fs::path& root, const GenerateOptions& options) {
  require(options.counts.train >= 0 && options.counts.test >= 0, "dataset: negative split count");
  std::vector<ManifestEntry> entries;
  const int total = options.counts.train + options.counts.test;
  for (int i = 0; i < total; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%05d", i);
    const Scene scene = generate_scene(mix_seed(options.seed, static_cast<std::uint64_t>(i)),
                                       options.scene);
    write_sample(root, stem, scene);
    entries.push_back({stem, i < options.counts.train ? Split::train : Split::test});
  }
  write_manifest(root, entries);
  return Dataset::open(root);
}

std::vector<AugmentedVariant> expand_scene(const Scene& scene, std::uint64_t seed) {
  std::vector<AugmentedVariant> out;
  for (Method m : kAllMethods) {
    AugmentationChain chain{{random_step(m, mix_seed(seed, static_cast<std::uint64_t>(m)))}};
    out.push_back({m, chain, augment(scene, chain)});
  }
  return out;
}

ExpandReport dataset_expand(const Dataset& source, const fs::path& out, std::uint64_t seed,
                            const std::vector<Split>& splits) {
  ExpandReport report;
  std::vector<ManifestEntry> manifest;
  fs::create_directories(out / "chains");
  std::uint64_t index = 0;
  for (const auto& entry : source.entries()) {
    if (std::find(splits.begin(), splits.end(), entry.split) == splits.end()) continue;
    const Scene scene = source.load(entry);
    ++report.sources;
    write_sample(out, entry.stem, scene);
    manifest.push_back(entry);
    ++report.originals;
    std::string chains;
    const std::uint64_t sample_seed = mix_seed(seed, index++);
    for (Method m : kAllMethods) {
      const std::string stem = entry.stem + "_" + to_string(m);
      try {
        AugmentationChain chain{
            {random_step(m, mix_seed(sample_seed, static_cast<std::uint64_t>(m)))}};
        AugmentLog log;
        const Scene variant = augment(scene, chain, &log);
        for (auto& line : log.entries) report.log.push_back(stem + ": " + line);
        write_sample(out, stem, variant);
        manifest.push_back({stem, entry.split});
        chains += "# " + stem + "\n" + chain.serialize();
        ++report.variants;
      } catch (const std::exception& e) {
        report.failures.push_back(stem + ": " + e.what());
      }
    }
    std::ofstream(out / "chains" / (entry.stem + ".txt")) << chains;
  }
  write_manifest(out, manifest);
  return report;
}

}  // namespace appledet::data
