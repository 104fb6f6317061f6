#pragma once

#include <array>
#include <vector>

#include "appledet/blocks/network_spec.hpp"
#include "appledet/boxloss/box.hpp"
#include "appledet/tensor/tensor.hpp"

namespace appledet::boxloss {

double sigmoid(double x);
double logit(double p);

/// Pixel-space box from the four raw regression logits of one cell/anchor:
/// xy = (2 sigma(t) - 0.5 + cell) * stride, wh = (2 sigma(t))^2 * anchor.
Box decode_cell(const std::array<double, 4>& raw, int row, int col, int stride,
                const blocks::AnchorBox& anchor);

/// Inverse of decode_cell. The truth center must lie strictly within
/// (-0.5, 1.5) cells of the given cell and its size within (0, 4) anchors.
std::array<double, 4> encode_cell(const Box& truth_px, int row, int col, int stride,
                                  const blocks::AnchorBox& anchor);

struct DecodeOptions {
  double conf_threshold = 0.001;
  /// One detection per class above threshold instead of the best class only.
  bool multi_label = true;
};

/// Decodes one head output (n, 3 * (5 + nc), gh, gw). Detections carry
/// image_id = batch index and confidence sigma(obj) * sigma(cls).
std::vector<Detection> decode_boxes(const tensor::Tensor& raw, const blocks::NetworkSpec& spec,
                                    int level, const DecodeOptions& options = {});

}  // namespace appledet::boxloss
