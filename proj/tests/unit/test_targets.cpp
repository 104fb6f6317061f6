#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <tuple>

#include "appledet/boxloss/decode.hpp"
#include "appledet/boxloss/detection_loss.hpp"
#include "appledet/boxloss/targets.hpp"
#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"
#include "appledet/tensor/grad_check.hpp"

using namespace appledet;
using namespace appledet::boxloss;
using blocks::NetworkSpec;
using blocks::Variant;
using tensor::Tensor;

namespace {

using Slot = std::tuple<int, int, int, int, int>;  // level, image, row, col, anchor

// Visits every (level, image, row, col, anchor) and asks which truths may
// claim it; the best anchor ratio (then lowest index) wins.
std::map<Slot, int> brute_force(const std::vector<std::vector<Box>>& truths, const NetworkSpec& spec,
                                int size) {
  std::map<Slot, int> out;
  for (int level = 0; level < static_cast<int>(spec.strides.size()); ++level) {
    const int stride = spec.strides[level], grid = size / stride;
    for (int img = 0; img < static_cast<int>(truths.size()); ++img) {
      for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
          for (int a = 0; a < 3; ++a) {
            double best = INFINITY;
            int winner = -1;
            for (int t = 0; t < static_cast<int>(truths[img].size()); ++t) {
              const Box& b = truths[img][t];
              const double gx = b.cx * grid, gy = b.cy * grid;
              const double rw = b.w * grid / (spec.anchors[level][a].w / stride);
              const double rh = b.h * grid / (spec.anchors[level][a].h / stride);
              const double ratio = std::max(std::max(rw, 1 / rw), std::max(rh, 1 / rh));
              if (ratio >= 4.0) continue;
              const int oc = std::min(static_cast<int>(gx), grid - 1);
              const int orow = std::min(static_cast<int>(gy), grid - 1);
              const double fx = gx - std::floor(gx), fy = gy - std::floor(gy);
              const bool owner = r == orow && c == oc;
              const bool left = r == orow && c == oc - 1 && fx < 0.5 && gx > 1.0;
              const bool right = r == orow && c == oc + 1 && fx > 0.5 && grid - gx > 1.0;
              const bool up = c == oc && r == orow - 1 && fy < 0.5 && gy > 1.0;
              const bool down = c == oc && r == orow + 1 && fy > 0.5 && grid - gy > 1.0;
              if (!(owner || left || right || up || down)) continue;
              if (ratio < best) {
                best = ratio;
                winner = t;
              }
            }
            if (winner >= 0) out[{level, img, r, c, a}] = winner;
          }
        }
      }
    }
  }
  return out;
}

std::vector<Box> random_truths(Rng& rng, int count) {
  std::vector<Box> out;
  for (int i = 0; i < count; ++i) {
    const double w = rng.uniform(0.03, 0.5), h = rng.uniform(0.03, 0.5);
    out.push_back(Box{rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h,
                      rng.integer(0, 1)});
  }
  return out;
}

std::vector<Tensor> random_heads(const NetworkSpec& spec, int batch, int size, Rng& rng) {
  std::vector<Tensor> heads;
  for (int s : spec.strides) {
    tensor::Shape shape{batch, spec.head_channels(), size / s, size / s};
    std::vector<double> v(shape.numel());
    for (double& x : v) x = rng.uniform(-1.5, 1.5);
    heads.push_back(Tensor::from_data(shape, std::move(v)));
  }
  return heads;
}

}  // namespace

TEST(AssignTargets, MatchesBruteForceEnumeration) {
  Rng rng(1);
  const auto spec = NetworkSpec::make(Variant::yolov5s_bc);
  for (int scene = 0; scene < 100; ++scene) {
    std::vector<std::vector<Box>> truths = {random_truths(rng, rng.integer(0, 4)),
                                            random_truths(rng, rng.integer(0, 3))};
    const auto got = assign_targets(truths, spec, 64, 64);
    std::map<Slot, int> seen;
    for (int level = 0; level < 4; ++level) {
      for (const auto& e : got.levels[level].entries) {
        const Slot key{level, e.image, e.row, e.col, e.anchor};
        EXPECT_FALSE(seen.count(key)) << "duplicate slot";
        seen[key] = e.truth_index;
      }
    }
    EXPECT_EQ(seen, brute_force(truths, spec, 64)) << "scene " << scene;
  }
}

TEST(AssignTargets, AnchorSizedTruthAndOversizedTruth) {
  const auto spec = NetworkSpec::make(Variant::yolov5s);
  const auto anchor = spec.anchors[0][1];  // stride 8
  // Center of cell (3, 2) at stride 8 on a 64 px image.
  const Box exact{(2 + 0.5) * 8 / 64.0, (3 + 0.5) * 8 / 64.0, anchor.w / 64.0, anchor.h / 64.0};
  const auto got = assign_targets({{exact}}, spec, 64, 64);
  bool found = false;
  for (const auto& e : got.levels[0].entries) found |= e.row == 3 && e.col == 2 && e.anchor == 1;
  EXPECT_TRUE(found);

  // Ten times every anchor of every level: no level accepts it.
  const Box huge{0.5, 0.5, 10 * spec.anchors[2][2].w / 64.0, 10 * spec.anchors[2][2].h / 64.0};
  EXPECT_EQ(assign_targets({{huge}}, spec, 64, 64).total(), 0u);
  EXPECT_THROW(assign_targets({{Box{0.5, 0.5, 0.0, 0.1}}}, spec, 64, 64), InvalidInput);
  EXPECT_THROW(assign_targets({{exact}}, spec, 48, 64), InvalidInput);
}

TEST(Decode, ZeroLogitsAndRoundTrip) {
  const blocks::AnchorBox anchor{10, 13};
  const Box b = decode_cell({0, 0, 0, 0}, 0, 0, 8, anchor);
  EXPECT_DOUBLE_EQ(b.cx, 4.0);
  EXPECT_DOUBLE_EQ(b.cy, 4.0);
  EXPECT_DOUBLE_EQ(b.w, 10.0);
  EXPECT_DOUBLE_EQ(b.h, 13.0);

  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const int row = rng.integer(0, 7), col = rng.integer(0, 7);
    const Box truth{(col + rng.uniform(-0.4, 1.4)) * 8, (row + rng.uniform(-0.4, 1.4)) * 8,
                    anchor.w * rng.uniform(0.1, 3.9), anchor.h * rng.uniform(0.1, 3.9)};
    const Box back = decode_cell(encode_cell(truth, row, col, 8, anchor), row, col, 8, anchor);
    EXPECT_NEAR(back.cx, truth.cx, 1e-6);
    EXPECT_NEAR(back.cy, truth.cy, 1e-6);
    EXPECT_NEAR(back.w, truth.w, 1e-6);
    EXPECT_NEAR(back.h, truth.h, 1e-6);
  }
}

TEST(Decode, BoundsHoldForAnyLogits) {
  Rng rng(3);
  const auto spec = NetworkSpec::make(Variant::yolov5s_bc);
  auto heads = random_heads(spec, 1, 64, rng);
  for (double& v : heads[1].data()) v = rng.uniform(-40, 40);
  const auto dets = decode_boxes(heads[1], spec, 1, {.conf_threshold = 0.0, .multi_label = true});
  EXPECT_FALSE(dets.empty());
  double max_anchor = 0.0;
  for (const auto& a : spec.anchors[1]) max_anchor = std::max({max_anchor, a.w, a.h});
  for (const auto& d : dets) {
    EXPECT_GT(d.box.w, 0.0);
    EXPECT_LE(d.box.w, 4 * max_anchor + 1e-9);
    EXPECT_LE(d.box.h, 4 * max_anchor + 1e-9);
    EXPECT_GE(d.confidence, 0.0);
    EXPECT_LE(d.confidence, 1.0);
    EXPECT_GE(d.box.cx, -0.5 * 8 - 1e-9);
    EXPECT_LE(d.box.cx, 64 + 0.5 * 8 + 1e-9);
  }
}

TEST(DetectionLoss, DefaultBalance) {
  EXPECT_EQ(default_objectness_balance({4, 8, 16, 32}), (std::vector<double>{0.1, 4.0, 1.0, 0.4}));
  EXPECT_EQ(default_objectness_balance({8, 16, 32}), (std::vector<double>{4.0, 1.0, 0.4}));
}

TEST(DetectionLoss, NoTruthsOnlyObjectness) {
  Rng rng(4);
  const auto spec = NetworkSpec::make(Variant::yolov5s_bc);
  auto heads = random_heads(spec, 2, 64, rng);
  const auto targets = assign_targets({{}, {}}, spec, 64, 64);
  const auto loss = detection_loss(heads, targets, spec);
  EXPECT_EQ(loss.positives, 0u);
  EXPECT_EQ(loss.box, 0.0);
  EXPECT_EQ(loss.cls, 0.0);
  EXPECT_GT(loss.obj, 0.0);
  EXPECT_DOUBLE_EQ(loss.total_value, total_loss(loss.box, loss.cls, loss.obj));
  EXPECT_DOUBLE_EQ(loss.total.item(), loss.total_value);
}

TEST(DetectionLoss, GradientOnTwoBoxTarget) {
  Rng rng(5);
  const auto spec = NetworkSpec::make(Variant::yolov5s_bc);
  auto heads = random_heads(spec, 1, 64, rng);
  const std::vector<std::vector<Box>> truths = {
      {Box{0.3, 0.4, 0.2, 0.25, kApple}, Box{0.7, 0.6, 0.15, 0.1, kBlock}}};
  const auto targets = assign_targets(truths, spec, 64, 64);
  ASSERT_GT(targets.total(), 0u);
  LossConfig cfg;
  cfg.alpha_mode = AlphaMode::differentiable;
  cfg.iou_scaled_objectness = false;
  for (std::size_t level = 0; level < heads.size(); ++level) {
    Tensor& h = heads[level];
    h.set_requires_grad(true);
    tensor::GradCheckOptions opt;
    opt.eps = 1e-5;
    opt.max_coordinates = 60;
    opt.seed = level;
    auto r = tensor::grad_check([&] { return detection_loss(heads, targets, spec, cfg).total; }, h, opt);
    EXPECT_TRUE(r.passed(1e-3)) << "level " << level << ": " << r.summary();
    h.set_requires_grad(false);
  }
}

TEST(DetectionLoss, BetterPredictionLowersBoxLoss) {
  Rng rng(6);
  const auto spec = NetworkSpec::make(Variant::yolov5s);
  auto heads = random_heads(spec, 1, 64, rng);
  const std::vector<std::vector<Box>> truths = {{Box{0.5, 0.5, 0.3, 0.3, kApple}}};
  const auto targets = assign_targets(truths, spec, 64, 64);
  const double before = detection_loss(heads, targets, spec).box;
  // Write the exact encoding of the truth into every positive slot.
  for (std::size_t level = 0; level < heads.size(); ++level) {
    const int stride = spec.strides[level];
    for (const auto& e : targets.levels[level].entries) {
      const Box px = truths[0][e.truth_index].scaled(64, 64);
      const auto raw = encode_cell(px, e.row, e.col, stride, spec.anchors[level][e.anchor]);
      for (int k = 0; k < 4; ++k) heads[level].at(0, e.anchor * 7 + k, e.row, e.col) = raw[k];
    }
  }
  const double after = detection_loss(heads, targets, spec).box;
  EXPECT_LT(after, 1e-9);
  EXPECT_GT(before, after);
}
