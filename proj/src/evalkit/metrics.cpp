#include "appledet/evalkit/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "appledet/common/error.hpp"

namespace appledet::evalkit {

int MatchResult::tp() const {
  return static_cast<int>(
      std::count_if(matches.begin(), matches.end(), [](const auto& m) { return m.true_positive; }));
}

int MatchResult::fp() const { return static_cast<int>(matches.size()) - tp(); }

MatchResult match_detections(const std::vector<Box>& dets, const std::vector<double>& conf,
                             const std::vector<Box>& truths, double iou_threshold) {
  require(dets.size() == conf.size(), "match_detections: one confidence per detection required");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  MatchResult result;
  result.num_truths = static_cast<int>(truths.size());
  std::vector<bool> taken(truths.size(), false);
  for (std::size_t d : order) {
    DetectionMatch m{d, conf[d], false, -1};
    double best = -1.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (taken[t]) continue;
      const double v = boxloss::iou(dets[d], truths[t]);
      if (v >= iou_threshold && v > best) {
        best = v;
        m.truth = static_cast<int>(t);
      }
    }
    if (m.truth >= 0) {
      taken[m.truth] = true;
      m.true_positive = true;
    }
    result.matches.push_back(m);
  }
  result.unmatched_truths =
      static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return result;
}

PrF1 pr_f1(int tp, int fp, int fn) {
  require(tp >= 0 && fp >= 0 && fn >= 0, "pr_f1: counts must be non-negative");
  require(tp + fp + fn > 0, "pr_f1: undefined with zero truths and zero detections");
  PrF1 r;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

PRCurve pr_curve(std::vector<ScoredFlag> flags, int num_truths) {
  require(num_truths >= 0, "pr_curve: negative truth count");
  std::stable_sort(flags.begin(), flags.end(),
                   [](const ScoredFlag& a, const ScoredFlag& b) { return a.confidence > b.confidence; });
  PRCurve curve;
  curve.num_truths = num_truths;
  int tp = 0, fp = 0;
  for (const auto& f : flags) {
    (f.true_positive ? tp : fp) += 1;
    curve.points.push_back(PRPoint{
        num_truths > 0 ? static_cast<double>(tp) / num_truths : 0.0,
        static_cast<double>(tp) / (tp + fp), f.confidence});
  }
  return curve;
}

double average_precision(const PRCurve& curve) {
  require(curve.num_truths > 0, "average_precision: undefined for a class without truths");
  const auto& pts = curve.points;
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].recall > prev_recall) {
      ap += (pts[i].recall - prev_recall) * envelope[i];
      prev_recall = pts[i].recall;
    }
  }
  return ap;
}

void write_pr_table(const std::filesystem::path& path, const PRCurve& curve) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  char line[96];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof line, "%.6f %.6f %.6f\n", p.recall, p.precision, p.threshold);
    out << line;
  }
}

EvaluationReport evaluate_detections(const std::vector<Detection>& dets,
                                     const std::vector<GroundTruth>& truths,
                                     const EvalOptions& options) {
  EvaluationReport report;
  double ap_sum = 0.0, p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  int with_truths = 0;
  for (int cls = 0; cls < options.num_classes; ++cls) {
    // image id -> (boxes, confidences, truths)
    std::map<int, std::vector<Box>> det_boxes, truth_boxes;
    std::map<int, std::vector<double>> det_conf;
    for (const auto& d : dets) {
      if (d.box.class_id != cls) continue;
      det_boxes[d.image_id].push_back(d.box);
      det_conf[d.image_id].push_back(d.confidence);
    }
    int n_truths = 0;
    for (const auto& t : truths) {
      if (t.box.class_id != cls) continue;
      truth_boxes[t.image_id].push_back(t.box);
      ++n_truths;
    }
    std::vector<ScoredFlag> flags;
    int tp_op = 0, fp_op = 0;
    for (const auto& [image, boxes] : det_boxes) {
      const auto it = truth_boxes.find(image);
      const std::vector<Box> none;
      const MatchResult m = match_detections(boxes, det_conf[image],
                                             it == truth_boxes.end() ? none : it->second,
                                             options.match_iou);
      for (const auto& dm : m.matches) {
        flags.push_back({dm.confidence, dm.true_positive});
        if (dm.confidence >= options.operating_conf) (dm.true_positive ? tp_op : fp_op) += 1;
      }
    }
    ClassReport cr;
    cr.class_id = cls;
    cr.truths = n_truths;
    cr.detections = tp_op + fp_op;
    cr.curve = pr_curve(flags, n_truths);
    if (n_truths > 0) {
      cr.ap = average_precision(cr.curve);
      cr.prf = pr_f1(tp_op, fp_op, n_truths - tp_op);
      cr.count_ratio = static_cast<double>(cr.detections) / n_truths;
      ap_sum += *cr.ap;
      p_sum += cr.prf.precision;
      r_sum += cr.prf.recall;
      f_sum += cr.prf.f1;
      ++with_truths;
    } else {
      report.warnings.push_back("class " + std::to_string(cls) +
                                " has no ground truths; AP undefined and excluded from mAP");
      if (cr.detections > 0) cr.prf = pr_f1(0, cr.detections, 0);
    }
    report.classes.push_back(std::move(cr));
  }
  if (with_truths > 0) {
    report.map = ap_sum / with_truths;
    report.mean = PrF1{p_sum / with_truths, r_sum / with_truths, f_sum / with_truths};
  }
  return report;
}

std::vector<CountAccuracy> accuracy_count(const std::vector<Detection>& dets,
                                          const std::vector<GroundTruth>& truths,
                                          int num_classes) {
  std::vector<CountAccuracy> out(num_classes);
  for (int c = 0; c < num_classes; ++c) out[c].class_id = c;
  for (const auto& t : truths) {
    require(t.box.class_id >= 0 && t.box.class_id < num_classes, "accuracy_count: bad class id");
    ++out[t.box.class_id].truths;
  }
  for (const auto& d : dets) {
    require(d.box.class_id >= 0 && d.box.class_id < num_classes, "accuracy_count: bad class id");
    ++out[d.box.class_id].detections;
  }
  for (auto& a : out) {
    if (a.truths > 0) a.ratio = static_cast<double>(a.detections) / a.truths;
  }
  return out;
}

}  // namespace appledet::evalkit
