#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "appledet/common/rng.hpp"
#include "appledet/tensor/ops.hpp"
#include "appledet/tensor/tensor.hpp"

namespace appledet::blocks {

using tensor::BatchNormState;
using tensor::Mode;
using tensor::Parameter;
using tensor::Tensor;

/// Walks parameters and batchnorm running statistics in a fixed order.
struct ParamVisitor {
  std::function<void(Parameter&)> on_parameter;
  std::function<void(const std::string&, BatchNormState&)> on_batchnorm;

  void parameter(Parameter& p) const {
    if (on_parameter) on_parameter(p);
  }
  void batchnorm(const std::string& name, BatchNormState& s) const {
    if (on_batchnorm) on_batchnorm(name, s);
  }
};

/// Plain convolution, optionally with bias. Weights start uniform in
/// +-1/sqrt(fan_in).
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int c_in, int c_out, int kernel, int stride, int pad,
         bool with_bias, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void visit(const ParamVisitor& v);

  int in_channels() const { return c_in_; }
  int out_channels() const { return c_out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  bool with_bias_ = false;
  int c_in_ = 0, c_out_ = 0, stride_ = 1, pad_ = 0;
};

/// Batch normalization with learnable affine terms.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, int channels);
  Tensor forward(const Tensor& x, Mode mode);
  void visit(const ParamVisitor& v);
  BatchNormState& state() { return state_; }

 private:
  std::string name_;
  Parameter gamma_, beta_;
  BatchNormState state_;
};

/// conv (no bias) -> batchnorm -> SiLU. Padding defaults to k/2.
class ConvBnAct {
 public:
  ConvBnAct() = default;
  ConvBnAct(const std::string& name, int c_in, int c_out, int kernel, int stride, Rng& rng,
            bool activation = true, int pad = -1);
  Tensor forward(const Tensor& x, Mode mode);
  void visit(const ParamVisitor& v);
  int out_channels() const { return conv_.out_channels(); }

 private:
  Conv2d conv_;
  BatchNorm bn_;
  bool activation_ = true;
};

class Bottleneck {
 public:
  Bottleneck(const std::string& name, int c_in, int c_out, bool shortcut, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  void visit(const ParamVisitor& v);

 private:
  ConvBnAct cv1_, cv2_;
  bool add_;
};

/// Cross-stage-partial block: two 1x1 branches, bottleneck stack on one,
/// concatenated and merged by a third 1x1.
class C3 {
 public:
  C3(const std::string& name, int c_in, int c_out, int repeats, bool shortcut, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  void visit(const ParamVisitor& v);

 private:
  ConvBnAct cv1_, cv2_, cv3_;
  std::vector<Bottleneck> stack_;
};

/// Fast spatial pyramid pooling: three chained k x k stride-1 max pools.
class SPPF {
 public:
  SPPF(const std::string& name, int c_in, int c_out, int kernel, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  void visit(const ParamVisitor& v);

 private:
  ConvBnAct cv1_, cv2_;
  int kernel_;
};

/// Coordinate attention. Pools along each spatial axis, mixes the two
/// direction-aware descriptors through a shared 1x1 bottleneck, and gates the
/// input with per-row and per-column sigmoid maps.
class CABlock {
 public:
  static constexpr int kDefaultReduction = 32;
  static int hidden_channels(int channels, int reduction) {
    return std::max(8, channels / reduction);
  }

  CABlock(const std::string& name, int channels, Rng& rng, int reduction = kDefaultReduction);

  struct Trace {
    Tensor pooled_h, pooled_w;  // (n,c,h,1), (n,c,1,w)
    Tensor gate_h, gate_w;      // (n,c,h,1), (n,c,1,w)
  };
  Tensor forward(const Tensor& x, Mode mode, Trace* trace = nullptr);
  void visit(const ParamVisitor& v);

  int channels() const { return channels_; }
  int hidden() const { return hidden_; }
  Conv2d& squeeze() { return conv1_; }
  BatchNorm& norm() { return bn_; }
  Conv2d& excite_h() { return conv_h_; }
  Conv2d& excite_w() { return conv_w_; }

 private:
  int channels_, hidden_;
  Conv2d conv1_;
  BatchNorm bn_;
  Conv2d conv_h_, conv_w_;
};

/// Weighted fusion of same-resolution inputs, O = post(sum_i w_i+ / (eps +
/// sum_j w_j+) * I_i), followed by a 3x3 conv-bn-act.
class BiFPNNode {
 public:
  static constexpr double kEpsilon = 1e-4;

  BiFPNNode(const std::string& name, int arity, int channels, int out_channels, Rng& rng);
  Tensor fuse(const std::vector<Tensor>& inputs) const;
  Tensor forward(const std::vector<Tensor>& inputs, Mode mode);
  void visit(const ParamVisitor& v);

  int arity() const { return arity_; }
  std::vector<double> coefficients() const;
  Parameter& weights() { return weights_; }

 private:
  int arity_;
  Parameter weights_;
  ConvBnAct post_;
};

}  // namespace appledet::blocks
