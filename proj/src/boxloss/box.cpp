#include "appledet/boxloss/box.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "appledet/common/error.hpp"

namespace appledet::boxloss {

Box Box::from_corners(double x1, double y1, double x2, double y2, int class_id) {
  return Box{0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1, class_id};
}

Box Box::scaled(double sx, double sy) const {
  return Box{cx * sx, cy * sy, w * sx, h * sy, class_id};
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  // Areas from the same corner differences as the overlap, so iou(a, a) == 1.
  const double area_a = (a.x2() - a.x1()) * (a.y2() - a.y1());
  const double area_b = (b.x2() - b.x1()) * (b.y2() - b.y1());
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

// Forward-mode value with partials wrt the predicted (cx, cy, w, h).
struct Dual {
  double v = 0.0;
  std::array<double, 4> d{};

  static Dual constant(double value) { return Dual{value, {}}; }
  static Dual variable(double value, int index) {
    Dual out{value, {}};
    out.d[index] = 1.0;
    return out;
  }
};

Dual operator+(Dual a, const Dual& b) {
  a.v += b.v;
  for (int i = 0; i < 4; ++i) a.d[i] += b.d[i];
  return a;
}
Dual operator-(Dual a, const Dual& b) {
  a.v -= b.v;
  for (int i = 0; i < 4; ++i) a.d[i] -= b.d[i];
  return a;
}
Dual operator*(const Dual& a, const Dual& b) {
  Dual out{a.v * b.v, {}};
  for (int i = 0; i < 4; ++i) out.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return out;
}
Dual operator/(const Dual& a, const Dual& b) {
  Dual out{a.v / b.v, {}};
  for (int i = 0; i < 4; ++i) out.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return out;
}
Dual operator*(double k, Dual a) {
  a.v *= k;
  for (double& x : a.d) x *= k;
  return a;
}
Dual dmax(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }
Dual dmin(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }
Dual dsqrt(const Dual& a) {
  Dual out{std::sqrt(a.v), {}};
  if (out.v > 0.0) {
    for (int i = 0; i < 4; ++i) out.d[i] = a.d[i] / (2.0 * out.v);
  }
  return out;
}
Dual datan(const Dual& a) {
  Dual out{std::atan(a.v), {}};
  const double k = 1.0 / (1.0 + a.v * a.v);
  for (int i = 0; i < 4; ++i) out.d[i] = a.d[i] * k;
  return out;
}

struct DualTerms {
  Dual loss;
  CiouTerms terms;
};

DualTerms evaluate(const Box& pred, const Box& gt, CiouForm form, AlphaMode alpha_mode) {
  require(pred.valid() && gt.valid(), "ciou: boxes must have positive width and height");
  const Dual cx = Dual::variable(pred.cx, 0);
  const Dual cy = Dual::variable(pred.cy, 1);
  const Dual w = Dual::variable(pred.w, 2);
  const Dual h = Dual::variable(pred.h, 3);
  const Dual half = Dual::constant(0.5);
  const Dual px1 = cx - half * w, px2 = cx + half * w;
  const Dual py1 = cy - half * h, py2 = cy + half * h;
  const Dual gx1 = Dual::constant(gt.x1()), gx2 = Dual::constant(gt.x2());
  const Dual gy1 = Dual::constant(gt.y1()), gy2 = Dual::constant(gt.y2());
  const Dual zero = Dual::constant(0.0);

  const Dual iw = dmax(zero, dmin(px2, gx2) - dmax(px1, gx1));
  const Dual ih = dmax(zero, dmin(py2, gy2) - dmax(py1, gy1));
  const Dual inter = iw * ih;
  const Dual uni = w * h + Dual::constant(gt.area()) - inter;
  const Dual iou_d = inter / uni;

  const Dual cw = dmax(px2, gx2) - dmin(px1, gx1);
  const Dual ch = dmax(py2, gy2) - dmin(py1, gy1);
  const Dual diag2 = cw * cw + ch * ch;
  const Dual dx = cx - Dual::constant(gt.cx);
  const Dual dy = cy - Dual::constant(gt.cy);
  const Dual rho2 = dx * dx + dy * dy;

  Dual ratio = zero;  // 0/0 on a degenerate enclosing box counts as 0
  if (diag2.v > 0.0) {
    ratio = form == CiouForm::squared ? rho2 / diag2 : dsqrt(rho2) / dsqrt(diag2);
  }

  const double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  const Dual dtheta = Dual::constant(std::atan(gt.w / gt.h)) - datan(w / h);
  const Dual v = k * (dtheta * dtheta);

  Dual alpha = zero;
  const double denom = (1.0 - iou_d.v) + v.v;
  if (denom > 0.0) {
    alpha = v / ((Dual::constant(1.0) - iou_d) + v);
    if (alpha_mode == AlphaMode::constant) alpha = Dual::constant(alpha.v);
  }

  DualTerms out;
  out.loss = Dual::constant(1.0) - iou_d + ratio + alpha * v;
  out.terms.iou = iou_d.v;
  out.terms.v = v.v;
  out.terms.alpha = alpha.v;
  out.terms.loss = out.loss.v;
  out.terms.distance_ratio = diag2.v > 0.0 ? std::sqrt(rho2.v) / std::sqrt(diag2.v) : 0.0;
  return out;
}

}  // namespace

CiouTerms ciou_terms(const Box& pred, const Box& gt, CiouForm form) {
  return evaluate(pred, gt, form, AlphaMode::constant).terms;
}

double ciou_loss(const Box& pred, const Box& gt, CiouForm form) {
  return ciou_terms(pred, gt, form).loss;
}

CiouGradient ciou_loss_gradient(const Box& pred, const Box& gt, CiouForm form,
                                AlphaMode alpha_mode) {
  const DualTerms r = evaluate(pred, gt, form, alpha_mode);
  return CiouGradient{r.terms, r.loss.d};
}

double bce_with_logit(double logit, double target, double* d_logit) {
  const bool clamped = logit > kLogitClamp || logit < -kLogitClamp;
  const double z = std::clamp(logit, -kLogitClamp, kLogitClamp);
  // max(z, 0) - z y + log(1 + exp(-|z|))
  const double value = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  if (d_logit) {
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    *d_logit = clamped ? 0.0 : s - target;
  }
  return value;
}

double bce_loss_logits(std::span<const double> logits, std::span<const double> targets) {
  require(!logits.empty(), "bce_loss: empty input");
  require(logits.size() == targets.size(), "bce_loss: prediction/target length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) acc += bce_with_logit(logits[i], targets[i]);
  return acc / static_cast<double>(logits.size());
}

double bce_loss(std::span<const double> probabilities, std::span<const double> targets) {
  require(!probabilities.empty(), "bce_loss: empty input");
  std::vector<double> logits;
  logits.reserve(probabilities.size());
  for (double p : probabilities) {
    require(p >= 0.0 && p <= 1.0, "bce_loss: probability outside [0, 1]");
    double z;
    if (p <= 0.0) {
      z = -kLogitClamp;
    } else if (p >= 1.0) {
      z = kLogitClamp;
    } else {
      z = std::log(p) - std::log1p(-p);
    }
    logits.push_back(z);
  }
  return bce_loss_logits(logits, targets);
}

double total_loss(double box, double cls, double obj, const LossCoefficients& coef) {
  require(coef.box >= 0.0 && coef.cls >= 0.0 && coef.obj >= 0.0,
          "total_loss: loss coefficients must be non-negative");
  return coef.box * box + coef.cls * cls + coef.obj * obj;
}

}  // namespace appledet::boxloss
