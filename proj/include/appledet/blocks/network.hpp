#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "appledet/blocks/layers.hpp"
#include "appledet/blocks/network_spec.hpp"

namespace appledet::blocks {

struct HeadInfo {
  int stride = 0;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<AnchorBox> anchors;
  bool operator==(const HeadInfo&) const = default;
};

struct ForwardResult {
  /// Raw head outputs, one per stride in network order, each
  /// (n, 3 * (5 + num_classes), h / stride, w / stride).
  std::vector<Tensor> heads;
  /// Named intermediate feature maps ("head_input.s8", "backbone.p3", ...).
  std::map<std::string, Tensor> features;
};

struct BuildOptions {
  std::uint64_t seed = 0;
  /// Keep parameters exactly representable in binary32 so that 32-bit
  /// checkpoints reload bit-identically.
  bool float32_storage = true;
};

/// Executable network compiled from a NetworkSpec. Parameter names and
/// initial values are deterministic functions of (spec, seed).
class LayerGraph {
 public:
  static std::unique_ptr<LayerGraph> build(const NetworkSpec& spec,
                                           const BuildOptions& options = {});
  ~LayerGraph();
  LayerGraph(const LayerGraph&) = delete;
  LayerGraph& operator=(const LayerGraph&) = delete;

  /// image: (n, 3, h, w) with h, w divisible by the largest stride.
  ForwardResult forward(const Tensor& image, Mode mode);

  const NetworkSpec& spec() const { return spec_; }
  bool float32_storage() const { return float32_storage_; }
  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, BatchNormState*>> batchnorm_states();
  std::size_t parameter_count();
  std::vector<HeadInfo> heads() const;

  /// Rounds parameters, momentum buffers and running statistics to binary32
  /// when float32 storage is enabled.
  void apply_storage_precision();
  void zero_grad();

 private:
  struct Impl;
  LayerGraph(NetworkSpec spec, bool float32_storage, std::unique_ptr<Impl> impl);

  NetworkSpec spec_;
  bool float32_storage_;
  std::unique_ptr<Impl> impl_;
};

/// Checks (n, 3, h, w) with h, w multiples of `multiple`.
void require_input_shape(const tensor::Shape& shape, int multiple);

}  // namespace appledet::blocks
