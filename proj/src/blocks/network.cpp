#include "appledet/blocks/network.hpp"

#include <cmath>
#include <optional>

#include "appledet/common/error.hpp"

namespace appledet::blocks {

namespace {

using tensor::upsample_nearest2;

// Reference widths and depths of the small model at multiples 1.0.
constexpr int kW64 = 64, kW128 = 128, kW256 = 256, kW512 = 512, kW1024 = 1024;

struct BackboneOutputs {
  Tensor p2, p3, p4, p5;
};

class Backbone {
 public:
  Backbone(const NetworkSpec& spec, Rng& rng)
      : stem_("backbone.stem", 3, spec.channels(kW64), 6, 2, rng, true, 2),
        down2_("backbone.down2", spec.channels(kW64), spec.channels(kW128), 3, 2, rng),
        stage2_("backbone.stage2", spec.channels(kW128), spec.channels(kW128), spec.repeats(3),
                true, rng),
        down3_("backbone.down3", spec.channels(kW128), spec.channels(kW256), 3, 2, rng),
        stage3_("backbone.stage3", spec.channels(kW256), spec.channels(kW256), spec.repeats(6),
                true, rng),
        down4_("backbone.down4", spec.channels(kW256), spec.channels(kW512), 3, 2, rng),
        stage4_("backbone.stage4", spec.channels(kW512), spec.channels(kW512), spec.repeats(9),
                true, rng),
        down5_("backbone.down5", spec.channels(kW512), spec.channels(kW1024), 3, 2, rng),
        stage5_("backbone.stage5", spec.channels(kW1024), spec.channels(kW1024),
                spec.repeats(3), true, rng),
        sppf_("backbone.sppf", spec.channels(kW1024), spec.channels(kW1024), 5, rng) {
    // Attention blocks draw last, so both variants share initial backbone
    // convolution weights for a given seed.
    if (spec.variant == Variant::yolov5s_bc) {
      ca_.emplace_back("backbone.stage2.ca", spec.channels(kW128), rng);
      ca_.emplace_back("backbone.stage3.ca", spec.channels(kW256), rng);
      ca_.emplace_back("backbone.stage4.ca", spec.channels(kW512), rng);
      ca_.emplace_back("backbone.stage5.ca", spec.channels(kW1024), rng);
    }
  }

  BackboneOutputs forward(const Tensor& x, Mode mode) {
    const auto attend = [&](Tensor t, std::size_t i) {
      return ca_.empty() ? t : ca_[i].forward(t, mode);
    };
    Tensor t = stem_.forward(x, mode);
    BackboneOutputs out;
    out.p2 = attend(stage2_.forward(down2_.forward(t, mode), mode), 0);
    out.p3 = attend(stage3_.forward(down3_.forward(out.p2, mode), mode), 1);
    out.p4 = attend(stage4_.forward(down4_.forward(out.p3, mode), mode), 2);
    out.p5 = sppf_.forward(attend(stage5_.forward(down5_.forward(out.p4, mode), mode), 3), mode);
    return out;
  }

  void visit(const ParamVisitor& v) {
    stem_.visit(v);
    down2_.visit(v);
    stage2_.visit(v);
    down3_.visit(v);
    stage3_.visit(v);
    down4_.visit(v);
    stage4_.visit(v);
    down5_.visit(v);
    stage5_.visit(v);
    sppf_.visit(v);
    for (auto& ca : ca_) ca.visit(v);
  }

 private:
  ConvBnAct stem_, down2_;
  C3 stage2_;
  ConvBnAct down3_;
  C3 stage3_;
  ConvBnAct down4_;
  C3 stage4_;
  ConvBnAct down5_;
  C3 stage5_;
  SPPF sppf_;
  std::vector<CABlock> ca_;
};

class Neck {
 public:
  virtual ~Neck() = default;
  /// Feature maps feeding the heads, finest first.
  virtual std::vector<Tensor> forward(const BackboneOutputs& in, Mode mode) = 0;
  virtual void visit(const ParamVisitor& v) = 0;
  virtual std::vector<int> out_channels() const = 0;
};

// Top-down FPN followed by a bottom-up PAN path, concatenation fusion.
class ConcatNeck final : public Neck {
 public:
  ConcatNeck(const NetworkSpec& spec, Rng& rng)
      : c256_(spec.channels(kW256)),
        c512_(spec.channels(kW512)),
        c1024_(spec.channels(kW1024)),
        lat5_("neck.lat5", c1024_, c512_, 1, 1, rng),
        td4_("neck.td4", 2 * c512_, c512_, spec.repeats(3), false, rng),
        lat4_("neck.lat4", c512_, c256_, 1, 1, rng),
        out3_("neck.out3", 2 * c256_, c256_, spec.repeats(3), false, rng),
        down3_("neck.down3", c256_, c256_, 3, 2, rng),
        out4_("neck.out4", 2 * c256_, c512_, spec.repeats(3), false, rng),
        down4_("neck.down4", c512_, c512_, 3, 2, rng),
        out5_("neck.out5", 2 * c512_, c1024_, spec.repeats(3), false, rng) {}

  std::vector<Tensor> forward(const BackboneOutputs& in, Mode mode) override {
    using tensor::concat_channels;
    Tensor n5 = lat5_.forward(in.p5, mode);
    Tensor t4 = td4_.forward(concat_channels({upsample_nearest2(n5), in.p4}), mode);
    Tensor n4 = lat4_.forward(t4, mode);
    Tensor o3 = out3_.forward(concat_channels({upsample_nearest2(n4), in.p3}), mode);
    Tensor o4 = out4_.forward(concat_channels({down3_.forward(o3, mode), n4}), mode);
    Tensor o5 = out5_.forward(concat_channels({down4_.forward(o4, mode), n5}), mode);
    return {o3, o4, o5};
  }

  void visit(const ParamVisitor& v) override {
    lat5_.visit(v);
    td4_.visit(v);
    lat4_.visit(v);
    out3_.visit(v);
    down3_.visit(v);
    out4_.visit(v);
    down4_.visit(v);
    out5_.visit(v);
  }

  std::vector<int> out_channels() const override { return {c256_, c512_, c1024_}; }

 private:
  int c256_, c512_, c1024_;
  ConvBnAct lat5_;
  C3 td4_;
  ConvBnAct lat4_;
  C3 out3_;
  ConvBnAct down3_;
  C3 out4_;
  ConvBnAct down4_;
  C3 out5_;
};

// One top-down and one bottom-up weighted-fusion pass over P2-P5. Each fusion
// node gates its resampled cross-level input with coordinate attention and is
// followed by a CSP refinement block.
class BiFPNNeck final : public Neck {
 public:
  BiFPNNeck(const NetworkSpec& spec, Rng& rng)
      : c128_(spec.channels(kW128)),
        c256_(spec.channels(kW256)),
        c512_(spec.channels(kW512)),
        c1024_(spec.channels(kW1024)),
        lat5_("neck.lat5", c1024_, c512_, 1, 1, rng),
        td4_ca_("neck.td4.ca", c512_, rng),
        td4_("neck.td4.node", 2, c512_, c512_, rng),
        td4_c3_("neck.td4.c3", c512_, c512_, spec.repeats(3), false, rng),
        lat4_("neck.lat4", c512_, c256_, 1, 1, rng),
        td3_ca_("neck.td3.ca", c256_, rng),
        td3_("neck.td3.node", 2, c256_, c256_, rng),
        td3_c3_("neck.td3.c3", c256_, c256_, spec.repeats(3), false, rng),
        lat3_("neck.lat3", c256_, c128_, 1, 1, rng),
        out2_ca_("neck.out2.ca", c128_, rng),
        out2_("neck.out2.node", 2, c128_, c128_, rng),
        out2_c3_("neck.out2.c3", c128_, c128_, spec.repeats(3), false, rng),
        down2_("neck.down2", c128_, c256_, 3, 2, rng),
        out3_ca_("neck.out3.ca", c256_, rng),
        out3_("neck.out3.node", 3, c256_, c256_, rng),
        out3_c3_("neck.out3.c3", c256_, c256_, spec.repeats(3), false, rng),
        down3_("neck.down3", c256_, c512_, 3, 2, rng),
        out4_ca_("neck.out4.ca", c512_, rng),
        out4_("neck.out4.node", 3, c512_, c512_, rng),
        out4_c3_("neck.out4.c3", c512_, c512_, spec.repeats(3), false, rng),
        down4_("neck.down4", c512_, c512_, 3, 2, rng),
        out5_ca_("neck.out5.ca", c512_, rng),
        out5_("neck.out5.node", 2, c512_, c512_, rng),
        out5_c3_("neck.out5.c3", c512_, c1024_, spec.repeats(3), false, rng) {}

  std::vector<Tensor> forward(const BackboneOutputs& in, Mode mode) override {
    Tensor n5 = lat5_.forward(in.p5, mode);
    Tensor t4 = td4_c3_.forward(
        td4_.forward({in.p4, td4_ca_.forward(upsample_nearest2(n5), mode)}, mode), mode);
    Tensor n4 = lat4_.forward(t4, mode);
    Tensor t3 = td3_c3_.forward(
        td3_.forward({in.p3, td3_ca_.forward(upsample_nearest2(n4), mode)}, mode), mode);
    Tensor n3 = lat3_.forward(t3, mode);
    Tensor o2 = out2_c3_.forward(
        out2_.forward({in.p2, out2_ca_.forward(upsample_nearest2(n3), mode)}, mode), mode);

    Tensor o3 = out3_c3_.forward(
        out3_.forward({in.p3, t3, out3_ca_.forward(down2_.forward(o2, mode), mode)}, mode),
        mode);
    Tensor o4 = out4_c3_.forward(
        out4_.forward({in.p4, t4, out4_ca_.forward(down3_.forward(o3, mode), mode)}, mode),
        mode);
    Tensor o5 = out5_c3_.forward(
        out5_.forward({n5, out5_ca_.forward(down4_.forward(o4, mode), mode)}, mode), mode);
    return {o2, o3, o4, o5};
  }

  void visit(const ParamVisitor& v) override {
    lat5_.visit(v);
    td4_ca_.visit(v);
    td4_.visit(v);
    td4_c3_.visit(v);
    lat4_.visit(v);
    td3_ca_.visit(v);
    td3_.visit(v);
    td3_c3_.visit(v);
    lat3_.visit(v);
    out2_ca_.visit(v);
    out2_.visit(v);
    out2_c3_.visit(v);
    down2_.visit(v);
    out3_ca_.visit(v);
    out3_.visit(v);
    out3_c3_.visit(v);
    down3_.visit(v);
    out4_ca_.visit(v);
    out4_.visit(v);
    out4_c3_.visit(v);
    down4_.visit(v);
    out5_ca_.visit(v);
    out5_.visit(v);
    out5_c3_.visit(v);
  }

  std::vector<int> out_channels() const override { return {c128_, c256_, c512_, c1024_}; }

 private:
  int c128_, c256_, c512_, c1024_;
  ConvBnAct lat5_;
  CABlock td4_ca_;
  BiFPNNode td4_;
  C3 td4_c3_;
  ConvBnAct lat4_;
  CABlock td3_ca_;
  BiFPNNode td3_;
  C3 td3_c3_;
  ConvBnAct lat3_;
  CABlock out2_ca_;
  BiFPNNode out2_;
  C3 out2_c3_;
  ConvBnAct down2_;
  CABlock out3_ca_;
  BiFPNNode out3_;
  C3 out3_c3_;
  ConvBnAct down3_;
  CABlock out4_ca_;
  BiFPNNode out4_;
  C3 out4_c3_;
  ConvBnAct down4_;
  CABlock out5_ca_;
  BiFPNNode out5_;
  C3 out5_c3_;
};

// Objectness prior of 8 objects per 640 px image, class prior 0.6 / (nc - 0.99).
void init_head_bias(Conv2d& head, int stride, int num_classes) {
  auto b = head.bias().value.data();
  const int per_anchor = 5 + num_classes;
  const double cells = std::pow(640.0 / stride, 2);
  const double obj = std::log(8.0 / cells);
  const double cls = std::log(0.6 / (num_classes - 0.99));
  for (int a = 0; a < NetworkSpec::kAnchorsPerStride; ++a) {
    b[a * per_anchor + 4] += obj;
    for (int k = 0; k < num_classes; ++k) b[a * per_anchor + 5 + k] += cls;
  }
}

}  // namespace

struct LayerGraph::Impl {
  Backbone backbone;
  std::unique_ptr<Neck> neck;
  std::vector<Conv2d> heads;

  Impl(const NetworkSpec& spec, Rng& rng) : backbone(spec, rng) {
    if (spec.variant == Variant::yolov5s_bc) {
      neck = std::make_unique<BiFPNNeck>(spec, rng);
    } else {
      neck = std::make_unique<ConcatNeck>(spec, rng);
    }
    const auto channels = neck->out_channels();
    for (std::size_t i = 0; i < spec.strides.size(); ++i) {
      const int s = spec.strides[i];
      heads.emplace_back("head.s" + std::to_string(s), channels[i], spec.head_channels(), 1, 1, 0,
                         true, rng);
      init_head_bias(heads.back(), s, spec.num_classes);
    }
  }

  void visit(const ParamVisitor& v) {
    backbone.visit(v);
    neck->visit(v);
    for (auto& h : heads) h.visit(v);
  }
};

LayerGraph::LayerGraph(NetworkSpec spec, bool float32_storage, std::unique_ptr<Impl> impl)
    : spec_(std::move(spec)), float32_storage_(float32_storage), impl_(std::move(impl)) {}

LayerGraph::~LayerGraph() = default;

std::unique_ptr<LayerGraph> LayerGraph::build(const NetworkSpec& spec,
                                              const BuildOptions& options) {
  spec.validate();
  Rng rng(options.seed);
  auto impl = std::make_unique<Impl>(spec, rng);
  std::unique_ptr<LayerGraph> graph(new LayerGraph(spec, options.float32_storage, std::move(impl)));
  graph->apply_storage_precision();
  return graph;
}

void require_input_shape(const tensor::Shape& shape, int multiple) {
  require(shape.c == 3, "network input must have 3 channels, got " + shape.str());
  require(shape.n >= 1, "network input batch is empty");
  require(shape.h > 0 && shape.w > 0 && shape.h % multiple == 0 && shape.w % multiple == 0,
          "network input " + shape.str() + " must have height and width divisible by " +
              std::to_string(multiple));
}

ForwardResult LayerGraph::forward(const Tensor& image, Mode mode) {
  require_input_shape(image.shape(), spec_.max_stride());
  const BackboneOutputs b = impl_->backbone.forward(image, mode);
  std::vector<Tensor> maps = impl_->neck->forward(b, mode);
  ForwardResult out;
  out.features["backbone.p2"] = b.p2;
  out.features["backbone.p3"] = b.p3;
  out.features["backbone.p4"] = b.p4;
  out.features["backbone.p5"] = b.p5;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    out.features["head_input.s" + std::to_string(spec_.strides[i])] = maps[i];
    out.heads.push_back(impl_->heads[i].forward(maps[i]));
  }
  return out;
}

std::vector<Parameter*> LayerGraph::parameters() {
  std::vector<Parameter*> out;
  impl_->visit(ParamVisitor{[&](Parameter& p) { out.push_back(&p); }, {}});
  return out;
}

std::vector<std::pair<std::string, BatchNormState*>> LayerGraph::batchnorm_states() {
  std::vector<std::pair<std::string, BatchNormState*>> out;
  impl_->visit(ParamVisitor{
      {}, [&](const std::string& name, BatchNormState& s) { out.emplace_back(name, &s); }});
  return out;
}

std::size_t LayerGraph::parameter_count() {
  std::size_t total = 0;
  for (const Parameter* p : parameters()) total += p->numel();
  return total;
}

std::vector<HeadInfo> LayerGraph::heads() const {
  std::vector<HeadInfo> out;
  for (std::size_t i = 0; i < spec_.strides.size(); ++i) {
    out.push_back(HeadInfo{spec_.strides[i], impl_->heads[i].in_channels(),
                           impl_->heads[i].out_channels(), spec_.anchors[i]});
  }
  return out;
}

void LayerGraph::apply_storage_precision() {
  if (!float32_storage_) return;
  for (Parameter* p : parameters()) {
    tensor::round_to_float(p->value.data());
    tensor::round_to_float(p->momentum);
  }
  for (auto& [name, state] : batchnorm_states()) {
    tensor::round_to_float(state->running_mean);
    tensor::round_to_float(state->running_var);
  }
}

void LayerGraph::zero_grad() {
  for (Parameter* p : parameters()) p->value.zero_grad();
}

}  // namespace appledet::blocks
