#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "appledet/boxloss/box.hpp"

namespace appledet::evalkit {

using boxloss::Box;
using boxloss::Detection;
using boxloss::GroundTruth;

struct DetectionMatch {
  std::size_t detection = 0;  // index into the input list
  double confidence = 0.0;
  bool true_positive = false;
  int truth = -1;             // matched truth index, -1 for a false positive
};

struct MatchResult {
  std::vector<DetectionMatch> matches;  // by descending confidence
  int num_truths = 0;
  int unmatched_truths = 0;
  int tp() const;
  int fp() const;
};

/// Greedy confidence-ordered matching for one image and one class: each
/// detection takes the highest-IoU unmatched truth with IoU >= threshold
/// (ties to the lower truth index), otherwise it is a false positive.
MatchResult match_detections(const std::vector<Box>& dets, const std::vector<double>& confidences,
                             const std::vector<Box>& truths, double iou_threshold = 0.5);

struct PrF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// P = TP / (TP + FP), R = TP / (TP + FN), F1 = 2PR / (P + R) with 0 when
/// P + R = 0. Empty detections give P = 0; zero truths give R = 0.
PrF1 pr_f1(int tp, int fp, int fn);

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // cumulative scan, one per detection
  int num_truths = 0;
};

struct ScoredFlag {
  double confidence = 0.0;
  bool true_positive = false;
};

/// Cumulative scan over flags sorted by descending confidence (stable).
PRCurve pr_curve(std::vector<ScoredFlag> flags, int num_truths);

/// All-point interpolated area under the curve. Throws when num_truths is 0.
double average_precision(const PRCurve& curve);

/// "recall precision threshold" per line.
void write_pr_table(const std::filesystem::path& path, const PRCurve& curve);

struct EvalOptions {
  int num_classes = boxloss::kNumClasses;
  double match_iou = 0.5;
  /// Confidence at which P, R and F1 are reported.
  double operating_conf = 0.25;
};

struct ClassReport {
  int class_id = 0;
  int truths = 0;
  int detections = 0;           // at the operating confidence
  std::optional<double> ap;     // absent when the class has no truths
  PrF1 prf;
  std::optional<double> count_ratio;  // detections / truths
  PRCurve curve;
};

struct EvaluationReport {
  std::vector<ClassReport> classes;
  double map = 0.0;  // mean AP over classes that have truths
  PrF1 mean;         // class mean of P, R, F1 over classes with truths
  std::vector<std::string> warnings;
};

/// `dets` are post-NMS detections over a whole set (image_id distinguishes
/// images), typically at a low confidence floor for the AP scan.
EvaluationReport evaluate_detections(const std::vector<Detection>& dets,
                                     const std::vector<GroundTruth>& truths,
                                     const EvalOptions& options = {});

struct CountAccuracy {
  int class_id = 0;
  int truths = 0;
  int detections = 0;
  std::optional<double> ratio;
};

/// Raw per-class count ratio detections / truths, not clamped.
std::vector<CountAccuracy> accuracy_count(const std::vector<Detection>& dets,
                                          const std::vector<GroundTruth>& truths,
                                          int num_classes = boxloss::kNumClasses);

}  // namespace appledet::evalkit
