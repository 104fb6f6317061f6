#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace appledet::cli {

struct GradCheckEntry {
  std::string block;       // "conv_bn_act", "ca", "bifpn_fusion", ...
  int cases = 0;           // random shapes / points checked
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::string worst_case;  // shape or point description of the worst case
  bool passed() const { return max_rel_error < threshold; }
};

struct GradCheckSuiteOptions {
  std::uint64_t seed = 0;
  int cases_per_block = 10;
  double block_threshold = 1e-4;
  double composite_threshold = 1e-3;
};

/// Central-difference checks of every trainable block and loss at random
/// shapes and points.
std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

/// "block cases max_rel_error threshold status" table.
std::string format_gradcheck_table(const std::vector<GradCheckEntry>& entries);

}  // namespace appledet::cli
