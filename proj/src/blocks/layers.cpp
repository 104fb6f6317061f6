#include "appledet/blocks/layers.hpp"

#include <cmath>

#include "appledet/common/error.hpp"

namespace appledet::blocks {

namespace {

void fill_uniform(Parameter& p, double bound, Rng& rng) {
  for (double& v : p.value.data()) v = rng.uniform(-bound, bound);
}

}  // namespace

Conv2d::Conv2d(const std::string& name, int c_in, int c_out, int kernel, int stride, int pad,
               bool with_bias, Rng& rng)
    : weight_(name + ".weight", {c_out, c_in, kernel, kernel}),
      with_bias_(with_bias),
      c_in_(c_in),
      c_out_(c_out),
      stride_(stride),
      pad_(pad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel * kernel));
  weight_.decay = true;
  fill_uniform(weight_, bound, rng);
  if (with_bias_) {
    bias_ = Parameter(name + ".bias", {1, c_out, 1, 1});
    fill_uniform(bias_, bound, rng);
  }
}

Tensor Conv2d::forward(const Tensor& x) const {
  return tensor::conv2d(x, weight_.value, with_bias_ ? bias_.value : Tensor{}, stride_, pad_);
}

void Conv2d::visit(const ParamVisitor& v) {
  v.parameter(weight_);
  if (with_bias_) v.parameter(bias_);
}

BatchNorm::BatchNorm(const std::string& name, int channels)
    : name_(name),
      gamma_(name + ".weight", {1, channels, 1, 1}),
      beta_(name + ".bias", {1, channels, 1, 1}),
      state_(channels) {
  for (double& g : gamma_.value.data()) g = 1.0;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  return tensor::batchnorm(x, gamma_.value, beta_.value, state_, mode);
}

void BatchNorm::visit(const ParamVisitor& v) {
  v.parameter(gamma_);
  v.parameter(beta_);
  v.batchnorm(name_, state_);
}

ConvBnAct::ConvBnAct(const std::string& name, int c_in, int c_out, int kernel, int stride,
                     Rng& rng, bool activation, int pad)
    : conv_(name + ".conv", c_in, c_out, kernel, stride, pad < 0 ? kernel / 2 : pad, false, rng),
      bn_(name + ".bn", c_out),
      activation_(activation) {}

Tensor ConvBnAct::forward(const Tensor& x, Mode mode) {
  Tensor y = bn_.forward(conv_.forward(x), mode);
  return activation_ ? tensor::silu(y) : y;
}

void ConvBnAct::visit(const ParamVisitor& v) {
  conv_.visit(v);
  bn_.visit(v);
}

Bottleneck::Bottleneck(const std::string& name, int c_in, int c_out, bool shortcut, Rng& rng)
    : cv1_(name + ".cv1", c_in, c_out, 1, 1, rng),
      cv2_(name + ".cv2", c_out, c_out, 3, 1, rng),
      add_(shortcut && c_in == c_out) {}

Tensor Bottleneck::forward(const Tensor& x, Mode mode) {
  Tensor y = cv2_.forward(cv1_.forward(x, mode), mode);
  return add_ ? tensor::add(x, y) : y;
}

void Bottleneck::visit(const ParamVisitor& v) {
  cv1_.visit(v);
  cv2_.visit(v);
}

C3::C3(const std::string& name, int c_in, int c_out, int repeats, bool shortcut, Rng& rng) {
  const int hidden = c_out / 2;
  cv1_ = ConvBnAct(name + ".cv1", c_in, hidden, 1, 1, rng);
  cv2_ = ConvBnAct(name + ".cv2", c_in, hidden, 1, 1, rng);
  cv3_ = ConvBnAct(name + ".cv3", 2 * hidden, c_out, 1, 1, rng);
  for (int i = 0; i < repeats; ++i) {
    stack_.emplace_back(name + ".m" + std::to_string(i), hidden, hidden, shortcut, rng);
  }
}

Tensor C3::forward(const Tensor& x, Mode mode) {
  Tensor a = cv1_.forward(x, mode);
  for (auto& b : stack_) a = b.forward(a, mode);
  Tensor b = cv2_.forward(x, mode);
  return cv3_.forward(tensor::concat_channels({a, b}), mode);
}

void C3::visit(const ParamVisitor& v) {
  cv1_.visit(v);
  cv2_.visit(v);
  cv3_.visit(v);
  for (auto& b : stack_) b.visit(v);
}

SPPF::SPPF(const std::string& name, int c_in, int c_out, int kernel, Rng& rng)
    : cv1_(name + ".cv1", c_in, c_in / 2, 1, 1, rng),
      cv2_(name + ".cv2", (c_in / 2) * 4, c_out, 1, 1, rng),
      kernel_(kernel) {}

Tensor SPPF::forward(const Tensor& x, Mode mode) {
  Tensor a = cv1_.forward(x, mode);
  Tensor y1 = tensor::maxpool(a, kernel_, 1, kernel_ / 2);
  Tensor y2 = tensor::maxpool(y1, kernel_, 1, kernel_ / 2);
  Tensor y3 = tensor::maxpool(y2, kernel_, 1, kernel_ / 2);
  return cv2_.forward(tensor::concat_channels({a, y1, y2, y3}), mode);
}

void SPPF::visit(const ParamVisitor& v) {
  cv1_.visit(v);
  cv2_.visit(v);
}

CABlock::CABlock(const std::string& name, int channels, Rng& rng, int reduction)
    : channels_(channels),
      hidden_(hidden_channels(channels, reduction)),
      conv1_(name + ".conv1", channels, hidden_, 1, 1, 0, true, rng),
      bn_(name + ".bn1", hidden_),
      conv_h_(name + ".conv_h", hidden_, channels, 1, 1, 0, true, rng),
      conv_w_(name + ".conv_w", hidden_, channels, 1, 1, 0, true, rng) {
  require(reduction >= 1, "CABlock: reduction must be >= 1");
}

Tensor CABlock::forward(const Tensor& x, Mode mode, Trace* trace) {
  const tensor::Shape s = x.shape();
  require(s.c == channels_, "CABlock: input " + s.str() + " has " + std::to_string(s.c) +
                                " channels, block expects " + std::to_string(channels_));
  require(s.h >= 1 && s.w >= 1, "CABlock: empty spatial extent " + s.str());

  Tensor z_h = tensor::directional_avg_pool(x, tensor::Axis::width);   // (n,c,h,1)
  Tensor z_w = tensor::directional_avg_pool(x, tensor::Axis::height);  // (n,c,1,w)
  Tensor stacked = tensor::concat_rows(z_h, tensor::reshape(z_w, {s.n, s.c, s.w, 1}));
  Tensor f = tensor::silu(bn_.forward(conv1_.forward(stacked), mode));
  auto [f_h, f_w] = tensor::split_spatial(f, s.h);
  Tensor g_h = tensor::sigmoid(conv_h_.forward(f_h));
  Tensor g_w = tensor::reshape(tensor::sigmoid(conv_w_.forward(f_w)), {s.n, s.c, 1, s.w});
  if (trace) *trace = Trace{z_h, z_w, g_h, g_w};
  return tensor::mul(tensor::mul(x, g_h), g_w);
}

void CABlock::visit(const ParamVisitor& v) {
  conv1_.visit(v);
  bn_.visit(v);
  conv_h_.visit(v);
  conv_w_.visit(v);
}

BiFPNNode::BiFPNNode(const std::string& name, int arity, int channels, int out_channels,
                     Rng& rng)
    : arity_(arity),
      weights_(name + ".fusion_weight", {1, 1, 1, arity}),
      post_(name + ".post", channels, out_channels, 3, 1, rng) {
  require(arity == 2 || arity == 3, "BiFPNNode: arity must be 2 or 3");
  for (double& w : weights_.value.data()) w = 1.0;
}

std::vector<double> BiFPNNode::coefficients() const {
  return tensor::fusion_coefficients(weights_.value.data(), kEpsilon);
}

Tensor BiFPNNode::fuse(const std::vector<Tensor>& inputs) const {
  require(static_cast<int>(inputs.size()) == arity_,
          "BiFPNNode: expected " + std::to_string(arity_) + " inputs, got " +
              std::to_string(inputs.size()));
  return tensor::weighted_fusion(inputs, weights_.value, kEpsilon);
}

Tensor BiFPNNode::forward(const std::vector<Tensor>& inputs, Mode mode) {
  return post_.forward(fuse(inputs), mode);
}

void BiFPNNode::visit(const ParamVisitor& v) {
  v.parameter(weights_);
  post_.visit(v);
}

}  // namespace appledet::blocks
