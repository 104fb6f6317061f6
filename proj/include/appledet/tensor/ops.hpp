#pragma once

#include <utility>
#include <vector>

#include "appledet/tensor/tensor.hpp"

namespace appledet::tensor {

// ---------------------------------------------------------------------------
// Convolution and normalization

/// Cross-correlation with square kernels. `bias` may be undefined.
/// weight: (c_out, c_in, k, k); bias: (1, c_out, 1, 1).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(int channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalization over (n, h, w). Train mode normalizes with batch
/// statistics and updates `state`; eval mode uses the running statistics.
/// gamma and beta are (1, c, 1, 1).
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode);

// ---------------------------------------------------------------------------
// Elementwise

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor scale(const Tensor& x, double factor);

/// Binary ops broadcast when one operand has extent 1 along h or w (or both);
/// n and c must match.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Pooling and resampling

enum class Axis { height, width };

/// Mean over one spatial axis. Axis::width yields (n, c, h, 1); Axis::height
/// yields (n, c, 1, w).
Tensor directional_avg_pool(const Tensor& x, Axis axis);

/// Max pooling with -inf padding.
Tensor maxpool(const Tensor& x, int kernel, int stride, int pad);
/// 2x2 stride-2 max pooling; h and w must be even.
Tensor maxpool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);
/// Stacks (n, c, h1, w) and (n, c, h2, w) into (n, c, h1 + h2, w).
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
/// Inverse of concat_rows for single-column maps: (n, c, h + w, 1) split
/// after `first_rows` rows.
std::pair<Tensor, Tensor> split_spatial(const Tensor& x, int first_rows);
/// Same data, new shape of equal element count.
Tensor reshape(const Tensor& x, Shape shape);

// ---------------------------------------------------------------------------
// Weighted fusion

/// max(w, 0) / (eps + sum max(w, 0)) for each raw weight.
std::vector<double> fusion_coefficients(std::span<const double> raw_weights, double eps);

/// sum_i coefficient_i * inputs[i]; weights is (1, 1, 1, k) with k == inputs.size().
Tensor weighted_fusion(const std::vector<Tensor>& inputs, const Tensor& weights,
                       double eps);

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace appledet::tensor
