#include <gtest/gtest.h>

#include <set>

#include "appledet/blocks/layers.hpp"
#include "appledet/blocks/network.hpp"
#include "appledet/boxloss/decode.hpp"
#include "appledet/common/error.hpp"
#include "appledet/tensor/grad_check.hpp"

using namespace appledet;
using namespace appledet::blocks;
using tensor::Shape;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(s, std::move(v));
}

std::vector<int> head_strides(const LayerGraph& g) {
  std::vector<int> out;
  for (const auto& h : g.heads()) out.push_back(h.stride);
  return out;
}

}  // namespace

TEST(CABlock, ShapeAndGateBoundsOnRandomShapes) {
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const Shape s{rng.integer(1, 3), rng.integer(1, 40), rng.integer(1, 7), rng.integer(1, 7)};
    CABlock ca("ca", s.c, rng);
    EXPECT_EQ(ca.hidden(), std::max(8, s.c / 32));
    Tensor x = random_tensor(s, rng);
    CABlock::Trace tr;
    Tensor y = ca.forward(x, Mode::train, &tr);
    ASSERT_EQ(y.shape(), s);
    EXPECT_EQ(tr.gate_h.shape(), (Shape{s.n, s.c, s.h, 1}));
    EXPECT_EQ(tr.gate_w.shape(), (Shape{s.n, s.c, 1, s.w}));
    for (double g : tr.gate_h.data()) EXPECT_TRUE(g > 0.0 && g < 1.0);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LE(std::abs(y.data()[i]), std::abs(x.data()[i]));
  }
}

TEST(CABlock, ZeroInputGivesZero) {
  Rng rng(2);
  CABlock ca("ca", 16, rng);
  const Tensor y = ca.forward(Tensor::zeros({2, 16, 3, 5}), Mode::train);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(CABlock, ZeroWeightsGiveQuarterGate) {
  Rng rng(3);
  CABlock ca("ca", 8, rng);
  for (Conv2d* c : {&ca.squeeze(), &ca.excite_h(), &ca.excite_w()}) {
    for (double& v : c->weight().value.data()) v = 0.0;
    for (double& v : c->bias().value.data()) v = 0.0;
  }
  Tensor x = random_tensor({1, 8, 4, 3}, rng);
  Tensor y = ca.forward(x, Mode::eval);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], 0.25 * x.data()[i], 1e-15);
}

TEST(CABlock, ChannelMismatchRejected) {
  Rng rng(4);
  CABlock ca("ca", 8, rng);
  EXPECT_THROW(ca.forward(Tensor::zeros({1, 4, 2, 2}), Mode::eval), InvalidInput);
}

TEST(CABlock, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  CABlock ca("ca", 12, rng);
  Tensor x = random_tensor({2, 12, 3, 4}, rng);
  Tensor r = random_tensor({2, 12, 3, 4}, rng);
  auto wrt_x = tensor::grad_check(
      [&](const Tensor& in) { return tensor::sum(tensor::mul(ca.forward(in, Mode::eval), r)); }, x);
  EXPECT_TRUE(wrt_x.passed(1e-4)) << wrt_x.summary();

  Tensor& w = ca.excite_h().weight().value;
  w.set_requires_grad(true);
  Tensor xc = x.detach();
  auto wrt_w = tensor::grad_check(
      [&] { return tensor::sum(tensor::mul(ca.forward(xc, Mode::eval), r)); }, w);
  EXPECT_TRUE(wrt_w.passed(1e-4)) << wrt_w.summary();
}

TEST(BiFPNNode, FusionWeightsGradient) {
  Rng rng(6);
  BiFPNNode node("n", 3, 8, 8, rng);
  EXPECT_EQ(node.arity(), 3);
  for (double c : node.coefficients()) EXPECT_NEAR(c, 1.0 / 3.0, 1e-4);
  std::vector<Tensor> in = {random_tensor({1, 8, 4, 4}, rng), random_tensor({1, 8, 4, 4}, rng),
                            random_tensor({1, 8, 4, 4}, rng)};
  Tensor r = random_tensor({1, 8, 4, 4}, rng);
  Tensor& w = node.weights().value;
  w.data()[0] = 0.7;
  w.data()[1] = 1.6;
  w.set_requires_grad(true);
  auto res = tensor::grad_check([&] { return tensor::sum(tensor::mul(node.forward(in, Mode::eval), r)); }, w);
  EXPECT_TRUE(res.passed(1e-4)) << res.summary();
}

TEST(BiFPNNode, RejectsMismatchedInputs) {
  Rng rng(7);
  BiFPNNode node("n", 2, 4, 4, rng);
  EXPECT_THROW(node.fuse({Tensor::zeros({1, 4, 4, 4})}), InvalidInput);
  EXPECT_THROW(node.fuse({Tensor::zeros({1, 4, 4, 4}), Tensor::zeros({1, 4, 2, 2})}), InvalidInput);
  EXPECT_THROW(BiFPNNode("bad", 4, 4, 4, rng), InvalidInput);
}

TEST(NetworkSpec, DefaultsAndValidation) {
  auto bc = NetworkSpec::make(Variant::yolov5s_bc);
  auto base = NetworkSpec::make(Variant::yolov5s);
  EXPECT_EQ(bc.strides, (std::vector<int>{4, 8, 16, 32}));
  EXPECT_EQ(base.strides, (std::vector<int>{8, 16, 32}));
  for (const auto& trio : bc.anchors) EXPECT_EQ(trio.size(), 3u);
  const auto trimmed = bc.without_stride(4);
  EXPECT_EQ(trimmed.strides, base.strides);
  EXPECT_EQ(trimmed.anchors, base.anchors);
  EXPECT_EQ(parse_variant("yolov5s-bc"), Variant::yolov5s_bc);
  EXPECT_THROW(parse_variant("yolov8"), InvalidInput);

  auto broken = bc;
  broken.strides = {8, 4, 16, 32};
  EXPECT_THROW(broken.validate(), InvalidInput);
  broken = bc;
  broken.strides[1] = 12;
  EXPECT_THROW(broken.validate(), InvalidInput);
  broken = bc;
  broken.anchors[0].pop_back();
  EXPECT_THROW(broken.validate(), InvalidInput);
}

TEST(NetworkSpec, ChannelScaling) {
  auto half = NetworkSpec::make(Variant::yolov5s, 0.33, 0.5);
  auto full = NetworkSpec::make(Variant::yolov5s, 0.33, 1.0);
  for (int base : {64, 128, 256, 512, 1024}) {
    EXPECT_EQ(full.channels(base), base);
    EXPECT_EQ(half.channels(base), base / 2);
    EXPECT_EQ(NetworkSpec::make(Variant::yolov5s, 0.33, 0.25).channels(base) % 8, 0);
  }
  EXPECT_EQ(NetworkSpec::make(Variant::yolov5s, 0.33, 0.01).channels(64), 8);
  EXPECT_EQ(half.repeats(3), 1);
  EXPECT_EQ(half.repeats(9), 3);
}

TEST(LayerGraph, HeadsAndParameterOrdering) {
  for (double width : {0.25, 0.5}) {
    auto bc = LayerGraph::build(NetworkSpec::make(Variant::yolov5s_bc, 0.33, width));
    auto base = LayerGraph::build(NetworkSpec::make(Variant::yolov5s, 0.33, width));
    EXPECT_EQ(head_strides(*bc), (std::vector<int>{4, 8, 16, 32}));
    EXPECT_EQ(head_strides(*base), (std::vector<int>{8, 16, 32}));
    EXPECT_GT(bc->parameter_count(), base->parameter_count());
  }
}

TEST(LayerGraph, ForwardShapesAndDeterminism) {
  auto g = LayerGraph::build(NetworkSpec::make(Variant::yolov5s_bc));
  Rng rng(8);
  Tensor x = random_tensor({2, 3, 64, 64}, rng);
  auto a = g->forward(x, Mode::eval);
  auto b = g->forward(x, Mode::eval);
  ASSERT_EQ(a.heads.size(), 4u);
  const int strides[] = {4, 8, 16, 32};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(a.heads[i].shape(), (Shape{2, 21, 64 / strides[i], 64 / strides[i]}));
    for (std::size_t k = 0; k < a.heads[i].numel(); ++k) EXPECT_EQ(a.heads[i].data()[k], b.heads[i].data()[k]);
  }
  EXPECT_TRUE(a.features.count("head_input.s4"));
  EXPECT_THROW(g->forward(Tensor::zeros({1, 3, 48, 64}), Mode::eval), InvalidInput);
}

TEST(LayerGraph, ParameterNamesUniqueAndSeeded) {
  auto g1 = LayerGraph::build(NetworkSpec::make(Variant::yolov5s_bc), {.seed = 3});
  auto g2 = LayerGraph::build(NetworkSpec::make(Variant::yolov5s_bc), {.seed = 3});
  auto g3 = LayerGraph::build(NetworkSpec::make(Variant::yolov5s_bc), {.seed = 4});
  std::set<std::string> names;
  auto p1 = g1->parameters(), p2 = g2->parameters(), p3 = g3->parameters();
  bool differs = false;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_TRUE(names.insert(p1[i]->name).second) << p1[i]->name;
    EXPECT_EQ(p1[i]->name, p2[i]->name);
    for (std::size_t k = 0; k < p1[i]->numel(); ++k) {
      EXPECT_EQ(p1[i]->value.data()[k], p2[i]->value.data()[k]);
      differs |= p1[i]->value.data()[k] != p3[i]->value.data()[k];
    }
  }
  EXPECT_TRUE(differs);
  bool has_ca = false, has_fusion = false;
  for (const auto& n : names) {
    has_ca |= n.find(".ca.") != std::string::npos;
    has_fusion |= n.find("fusion_weight") != std::string::npos;
  }
  EXPECT_TRUE(has_ca);
  EXPECT_TRUE(has_fusion);
}

TEST(LayerGraph, ZeroedParametersGiveNeutralObjectness) {
  auto g = LayerGraph::build(NetworkSpec::make(Variant::yolov5s_bc));
  for (auto* p : g->parameters()) {
    for (double& v : p->value.data()) v = 0.0;
  }
  Rng rng(9);
  auto out = g->forward(random_tensor({1, 3, 64, 64}, rng), Mode::eval);
  for (std::size_t level = 0; level < out.heads.size(); ++level) {
    for (double v : out.heads[level].data()) EXPECT_EQ(v, 0.0);
    for (const auto& d : boxloss::decode_boxes(out.heads[level], g->spec(), level, {.conf_threshold = 0.0}))
      EXPECT_DOUBLE_EQ(d.confidence, 0.25);  // sigma(0) objectness times sigma(0) class
  }
}
