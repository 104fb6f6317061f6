#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "appledet/blocks/network.hpp"

namespace appledet::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParameterBlob {
  tensor::Shape shape;
  std::vector<float> values;
  std::vector<float> momentum;
};

struct BatchNormBlob {
  std::vector<float> running_mean;
  std::vector<float> running_var;
};

/// Binary layout, all integers and floats little-endian:
///   "APDTCKPT" u32 version
///   str network-section text, u64 step, u32 epoch
///   u32 count, then per parameter: str name, 4 x u32 shape,
///     f32 values[numel], f32 momentum[numel]
///   u32 count, then per batchnorm: str name, u32 channels,
///     f32 mean[channels], f32 var[channels]
/// where str is a u32 byte length followed by the bytes.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string network;  // "[network]" section of the run config
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;
  std::map<std::string, ParameterBlob> parameters;
  std::map<std::string, BatchNormBlob> batchnorms;
};

Checkpoint capture(blocks::LayerGraph& graph, const std::string& network_text,
                   std::uint64_t step, std::uint32_t epoch);
/// Copies values into a graph built from the same spec. Names and shapes
/// must match exactly.
void restore(const Checkpoint& ckpt, blocks::LayerGraph& graph);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace appledet::cli
