#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"
#include "appledet/evalkit/metrics.hpp"
#include "appledet/evalkit/nms.hpp"
#include "oracles.hpp"

using namespace appledet;
using namespace appledet::evalkit;

namespace {

std::vector<ScoredFlag> random_flags(Rng& rng, int count) {
  std::vector<ScoredFlag> f;
  for (int i = 0; i < count; ++i) f.push_back({rng.uniform(0.01, 1.0), rng.bernoulli(0.5)});
  return f;
}

Detection det(double x1, double y1, double x2, double y2, double conf, int cls = 0, int image = 0) {
  return Detection{Box::from_corners(x1, y1, x2, y2, cls), conf, image};
}

}  // namespace

TEST(AveragePrecision, HandCases) {
  EXPECT_EQ(average_precision(pr_curve({{0.9, true}}, 1)), 1.0);
  EXPECT_EQ(average_precision(pr_curve({}, 3)), 0.0);
  const double ap = average_precision(pr_curve({{0.9, true}, {0.8, false}, {0.7, true}}, 2));
  EXPECT_NEAR(ap, 0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-9);
  EXPECT_NEAR(ap, 0.8333333333, 1e-9);
  EXPECT_THROW(average_precision(pr_curve({{0.5, false}}, 0)), InvalidInput);
}

TEST(AveragePrecision, EqualsStaircaseOracle) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto flags = random_flags(rng, rng.integer(0, 12));
    int tps = 0;
    for (const auto& f : flags) tps += f.true_positive;
    const int n = tps + rng.integer(tps == 0 ? 1 : 0, 3);
    EXPECT_EQ(average_precision(pr_curve(flags, n)), oracle::staircase_ap(flags, n));
  }
}

TEST(AveragePrecision, InvariantUnderMonotoneRescaling) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    auto flags = random_flags(rng, rng.integer(1, 15));
    const int n = static_cast<int>(flags.size()) + 1;
    const double ap = average_precision(pr_curve(flags, n));
    for (auto& f : flags) f.confidence = std::exp(5 * f.confidence) * 3 + 1;
    EXPECT_EQ(average_precision(pr_curve(flags, n)), ap);
  }
}

TEST(PrCurve, RecallMonotoneAndBounded) {
  Rng rng(3);
  const auto curve = pr_curve(random_flags(rng, 40), 25);
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    EXPECT_GE(curve.points[i].recall, curve.points[i - 1].recall);
  for (const auto& p : curve.points) {
    EXPECT_GE(p.precision, 0.0);
    EXPECT_LE(p.precision, 1.0);
  }
}

TEST(PrF1, Definitions) {
  auto a = pr_f1(3, 0, 0);
  EXPECT_EQ(a.precision, 1.0);
  EXPECT_EQ(a.recall, 1.0);
  EXPECT_EQ(a.f1, 1.0);
  auto b = pr_f1(2, 1, 1);
  EXPECT_NEAR(b.precision, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.recall, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.f1, 2.0 / 3.0, 1e-15);
  const double p = 0.913, r = 0.919;
  EXPECT_NEAR(2 * p * r / (p + r), 0.916, 5e-4);
  EXPECT_EQ(pr_f1(0, 4, 2).f1, 0.0);
  EXPECT_THROW(pr_f1(0, 0, 0), InvalidInput);

  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const int tp = rng.integer(1, 50), fp = rng.integer(0, 50), fn = rng.integer(0, 50);
    const auto m = pr_f1(tp, fp, fn);
    const double P = tp / double(tp + fp), R = tp / double(tp + fn);
    EXPECT_NEAR(m.f1, 2 * P * R / (P + R), 1e-15);
  }
}

TEST(Matching, BasicCases) {
  const Box t = Box::from_corners(0, 0, 10, 10);
  auto one = match_detections({t}, {0.9}, {t});
  EXPECT_EQ(one.tp(), 1);
  EXPECT_EQ(one.unmatched_truths, 0);
  auto none = match_detections({t}, {0.9}, {});
  EXPECT_EQ(none.fp(), 1);
  // The second copy finds its truth already taken.
  auto dup = match_detections({t, t}, {0.8, 0.9}, {t});
  EXPECT_EQ(dup.tp(), 1);
  EXPECT_EQ(dup.fp(), 1);
  EXPECT_EQ(dup.matches[0].detection, 1u);
}

TEST(Matching, GreedyInvariantOnRandomGeometry) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Box> dets, truths;
    std::vector<double> conf;
    for (int i = 0; i < 3; ++i) {
      dets.push_back(Box{rng.uniform(3, 7), rng.uniform(3, 7), rng.uniform(2, 5), rng.uniform(2, 5)});
      conf.push_back(rng.uniform());
    }
    for (int i = 0; i < 2; ++i)
      truths.push_back(Box{rng.uniform(3, 7), rng.uniform(3, 7), rng.uniform(2, 5), rng.uniform(2, 5)});
    const auto m = match_detections(dets, conf, truths, 0.3);
    // Replay: each detection, in descending confidence, must hold the
    // best-IoU truth still free, or be FP when none reaches the threshold.
    std::vector<bool> taken(truths.size(), false);
    for (std::size_t k = 1; k < m.matches.size(); ++k)
      EXPECT_GE(m.matches[k - 1].confidence, m.matches[k].confidence);
    for (const auto& dm : m.matches) {
      int best = -1;
      double best_iou = 0.3;
      for (std::size_t t = 0; t < truths.size(); ++t) {
        const double v = iou(dets[dm.detection], truths[t]);
        if (!taken[t] && v >= best_iou && (best < 0 || v > best_iou)) {
          best = static_cast<int>(t);
          best_iou = v;
        }
      }
      EXPECT_EQ(dm.truth, best);
      EXPECT_EQ(dm.true_positive, best >= 0);
      if (best >= 0) taken[best] = true;
    }
  }
}

TEST(Matching, HigherThresholdNeverRaisesAp) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> truths;
    for (int i = 0; i < 6; ++i) {
      const Box b{rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(5, 15), rng.uniform(5, 15)};
      truths.push_back({b, 0});
      Box d = b;
      d.cx += rng.uniform(-4, 4);
      d.w *= rng.uniform(0.7, 1.3);
      dets.push_back(Detection{d, rng.uniform(), 0});
    }
    double prev = 2.0;
    for (double thr : {0.3, 0.5, 0.7, 0.9}) {
      EvalOptions o;
      o.num_classes = 1;
      o.match_iou = thr;
      const double ap = evaluate_detections(dets, truths, o).map;
      EXPECT_LE(ap, prev);
      prev = ap;
    }
  }
}

TEST(Nms, Examples) {
  auto single = nms({det(0, 0, 10, 10, 0.6)}, 0.45, 0.25);
  ASSERT_EQ(single.size(), 1u);
  auto same = nms({det(0, 0, 10, 10, 0.8), det(0, 0, 10, 10, 0.9)}, 0.45, 0.25);
  ASSERT_EQ(same.size(), 1u);
  EXPECT_EQ(same[0].confidence, 0.9);
  // Horizontal overlap o: inter = 10 o, union = 200 - 10 o, IoU 0.3 at o = 60/13.
  const double o = 60.0 / 13.0;
  const Detection a = det(0, 0, 10, 10, 0.9), b = det(10 - o, 0, 20 - o, 10, 0.8);
  EXPECT_NEAR(iou(a.box, b.box), 0.3, 1e-12);
  EXPECT_EQ(nms({a, b}, 0.45, 0.25).size(), 2u);
  auto classes = nms({det(0, 0, 10, 10, 0.9, 0), det(0, 0, 10, 10, 0.8, 1)}, 0.45, 0.25);
  EXPECT_EQ(classes.size(), 2u);
  auto images = nms({det(0, 0, 10, 10, 0.9, 0, 0), det(0, 0, 10, 10, 0.8, 0, 1)}, 0.45, 0.25);
  EXPECT_EQ(images.size(), 2u);
  EXPECT_TRUE(nms({det(0, 0, 10, 10, 0.2)}, 0.45, 0.25).empty());
}

TEST(Nms, SubsetSortedSeparatedIdempotent) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> in;
    for (int i = 0; i < 30; ++i) {
      const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
      in.push_back(det(x, y, x + rng.uniform(4, 16), y + rng.uniform(4, 16), rng.uniform(),
                       rng.integer(0, 1), rng.integer(0, 1)));
    }
    const auto out = nms(in, 0.45, 0.25);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_GE(out[i].confidence, 0.25);
      if (i > 0) {
        EXPECT_GE(out[i - 1].confidence, out[i].confidence);
      }
      EXPECT_NE(std::find_if(in.begin(), in.end(),
                             [&](const Detection& d) {
                               return d.box == out[i].box && d.confidence == out[i].confidence;
                             }),
                in.end());
      for (std::size_t j = 0; j < i; ++j) {
        if (out[i].box.class_id == out[j].box.class_id && out[i].image_id == out[j].image_id) {
          EXPECT_LE(iou(out[i].box, out[j].box), 0.45);
        }
      }
    }
    const auto again = nms(out, 0.45, 0.25);
    ASSERT_EQ(again.size(), out.size());
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(again[i].box, out[i].box);
  }
}

TEST(AccuracyCount, RatiosNotClamped) {
  std::vector<GroundTruth> truths;
  std::vector<Detection> dets;
  for (int i = 0; i < 5; ++i) {
    const Box b = Box::from_corners(i * 20, 0, i * 20 + 10, 10, 0);
    truths.push_back({b, 0});
    dets.push_back({b, 0.9, 0});
    dets.push_back({b, 0.8, 0});
  }
  auto counts = accuracy_count(dets, truths);
  EXPECT_EQ(counts[0].truths, 5);
  EXPECT_EQ(counts[0].detections, 10);
  EXPECT_DOUBLE_EQ(*counts[0].ratio, 2.0);
  EXPECT_FALSE(counts[1].ratio.has_value());
  EXPECT_NEAR(6249.0 / 6259.0, 0.998, 5e-4);
}

TEST(Evaluate, ClassWithoutTruthsExcludedWithWarning) {
  const Box b = Box::from_corners(0, 0, 10, 10, 0);
  const auto r = evaluate_detections({{b, 0.9, 0}}, {{b, 0}});
  EXPECT_EQ(r.classes[0].ap, 1.0);
  EXPECT_FALSE(r.classes[1].ap.has_value());
  EXPECT_EQ(r.map, 1.0);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(PrTable, WritesOneLinePerPoint) {
  const auto path = std::filesystem::temp_directory_path() / "appledet_pr_table.txt";
  write_pr_table(path, pr_curve({{0.9, true}, {0.5, false}}, 2));
  std::ifstream in(path);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(l1, "0.500000 1.000000 0.900000");
  EXPECT_EQ(l2, "0.500000 0.500000 0.500000");
  std::filesystem::remove(path);
}
