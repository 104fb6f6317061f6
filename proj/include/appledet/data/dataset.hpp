#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "appledet/data/augment.hpp"
#include "appledet/data/scene.hpp"

namespace appledet::data {

enum class Split { train, test };
std::string to_string(Split s);

struct ManifestEntry {
  std::string stem;
  Split split = Split::train;
  bool operator==(const ManifestEntry&) const = default;
};

/// Directory layout: images/<stem>.ppm, labels/<stem>.txt, manifest.txt with
/// one "stem split" line per sample.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::vector<ManifestEntry> split(Split s) const;

  /// Image plus truths converted to pixel units.
  Scene load(const ManifestEntry& entry) const;
  std::vector<Scene> load_split(Split s) const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestEntry> entries_;
};

void write_sample(const std::filesystem::path& root, const std::string& stem, const Scene& scene);
void write_manifest(const std::filesystem::path& root, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);

/// Train/test counts from a total and the train fraction (0.85 by default).
struct SplitCounts {
  int train = 0;
  int test = 0;
};
SplitCounts split_counts(int total, double train_fraction = 0.85);

struct GenerateOptions {
  SplitCounts counts{170, 30};
  std::uint64_t seed = 0;
  SceneConfig scene;
};

/// Scene i gets seed mix_seed(seed, i); the first counts.train scenes are
/// the training split.
Dataset generate_dataset(const std::filesystem::path& root, const GenerateOptions& options);

struct AugmentedVariant {
  Method method;
  AugmentationChain chain;
  Scene scene;
};

/// One single-step variant per method, in kAllMethods order.
std::vector<AugmentedVariant> expand_scene(const Scene& scene, std::uint64_t seed);

struct ExpandReport {
  int sources = 0;
  int variants = 0;
  int originals = 0;
  std::vector<std::string> failures;  // "<stem> <method>: reason"
  std::vector<std::string> log;       // dropped truths
};

/// Writes every source sample of `splits` plus its eight variants to `out`.
/// Variant chains are stored as chains/<stem>.txt for replay. A failing
/// variant is skipped and reported; the rest of the sample is kept.
ExpandReport dataset_expand(const Dataset& source, const std::filesystem::path& out,
                            std::uint64_t seed, const std::vector<Split>& splits = {Split::train});

}  // namespace appledet::data
