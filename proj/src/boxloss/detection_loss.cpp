#include "appledet/boxloss/detection_loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "appledet/boxloss/decode.hpp"
#include "appledet/common/error.hpp"

namespace appledet::boxloss {

std::vector<double> default_objectness_balance(const std::vector<int>& strides) {
  std::vector<double> out;
  for (int s : strides) {
    switch (s) {
      case 4: out.push_back(0.1); break;
      case 8: out.push_back(4.0); break;
      case 16: out.push_back(1.0); break;
      case 32: out.push_back(0.4); break;
      default: out.push_back(1.0); break;
    }
  }
  return out;
}

LossBreakdown detection_loss(const std::vector<tensor::Tensor>& heads,
                             const AssignedTargets& targets, const blocks::NetworkSpec& spec,
                             const LossConfig& config) {
  const std::size_t levels = spec.strides.size();
  require(heads.size() == levels, "detection_loss: expected " + std::to_string(levels) +
                                      " head outputs, got " + std::to_string(heads.size()));
  require(targets.levels.size() == levels, "detection_loss: targets built for another network");
  const LossCoefficients& coef = config.coefficients;
  require(coef.box >= 0.0 && coef.cls >= 0.0 && coef.obj >= 0.0,
          "detection_loss: loss coefficients must be non-negative");
  const std::vector<double> balance = config.objectness_balance.empty()
                                          ? default_objectness_balance(spec.strides)
                                          : config.objectness_balance;
  require(balance.size() == levels, "detection_loss: one objectness weight per level required");

  const int per_anchor = spec.outputs_per_anchor();
  const int nc = spec.num_classes;
  LossBreakdown out;
  auto grads = std::make_shared<std::vector<std::vector<double>>>(levels);

  for (std::size_t l = 0; l < levels; ++l) {
    const tensor::Tensor& head = heads[l];
    const tensor::Shape s = head.shape();
    const LevelTargets& lt = targets.levels[l];
    require(s.c == spec.head_channels() && s.h == lt.grid_h && s.w == lt.grid_w &&
                s.n == targets.batch,
            "detection_loss: head " + std::to_string(l) + " shape " + s.str() +
                " does not match targets");
    tensor::require_finite(head.data(), "head output at stride " + std::to_string(lt.stride));

    const auto raw = head.data();
    auto& g = (*grads)[l];
    g.assign(raw.size(), 0.0);
    const auto idx = [&](int n, int ch, int y, int x) {
      return ((static_cast<std::size_t>(n) * s.c + ch) * s.h + y) * s.w + x;
    };

    std::vector<double> tobj(static_cast<std::size_t>(s.n) * 3 * s.h * s.w, 0.0);
    const auto obj_slot = [&](int n, int a, int y, int x) {
      return ((static_cast<std::size_t>(n) * 3 + a) * s.h + y) * s.w + x;
    };

    const std::size_t m = lt.entries.size();
    out.positives += m;
    if (m > 0) {
      double lbox = 0.0, lcls = 0.0;
      const double box_scale = coef.box / static_cast<double>(m);
      const double cls_scale = coef.cls / static_cast<double>(m * nc);
      for (const Assignment& e : lt.entries) {
        const int base = e.anchor * per_anchor;
        const double sx = sigmoid(raw[idx(e.image, base, e.row, e.col)]);
        const double sy = sigmoid(raw[idx(e.image, base + 1, e.row, e.col)]);
        const double sw = sigmoid(raw[idx(e.image, base + 2, e.row, e.col)]);
        const double sh = sigmoid(raw[idx(e.image, base + 3, e.row, e.col)]);
        const Box pred{2.0 * sx - 0.5, 2.0 * sy - 0.5, 4.0 * sw * sw * e.anchor_w,
                       4.0 * sh * sh * e.anchor_h, e.class_id};
        const CiouGradient cg =
            ciou_loss_gradient(pred, e.target_in_cell(), config.ciou_form, config.alpha_mode);
        lbox += cg.terms.loss;
        const double dpred[4] = {2.0 * sx * (1.0 - sx), 2.0 * sy * (1.0 - sy),
                                 8.0 * sw * sw * (1.0 - sw) * e.anchor_w,
                                 8.0 * sh * sh * (1.0 - sh) * e.anchor_h};
        for (int k = 0; k < 4; ++k) {
          g[idx(e.image, base + k, e.row, e.col)] += box_scale * cg.d_pred[k] * dpred[k];
        }
        for (int k = 0; k < nc; ++k) {
          const std::size_t i = idx(e.image, base + 5 + k, e.row, e.col);
          double d = 0.0;
          lcls += bce_with_logit(raw[i], k == e.class_id ? 1.0 : 0.0, &d);
          g[i] += cls_scale * d;
        }
        tobj[obj_slot(e.image, e.anchor, e.row, e.col)] =
            config.iou_scaled_objectness ? std::clamp(1.0 - cg.terms.loss, 0.0, 1.0) : 1.0;
      }
      out.box += lbox / static_cast<double>(m);
      out.cls += lcls / static_cast<double>(m * nc);
    }

    double lobj = 0.0;
    const double obj_scale = coef.obj * balance[l] / static_cast<double>(tobj.size());
    for (int n = 0; n < s.n; ++n) {
      for (int a = 0; a < 3; ++a) {
        for (int y = 0; y < s.h; ++y) {
          for (int x = 0; x < s.w; ++x) {
            const std::size_t i = idx(n, a * per_anchor + 4, y, x);
            double d = 0.0;
            lobj += bce_with_logit(raw[i], tobj[obj_slot(n, a, y, x)], &d);
            g[i] += obj_scale * d;
          }
        }
      }
    }
    out.obj += balance[l] * lobj / static_cast<double>(tobj.size());
  }

  out.total_value = total_loss(out.box, out.cls, out.obj, coef);
  if (!std::isfinite(out.total_value)) {
    const char* part = !std::isfinite(out.box) ? "box" : !std::isfinite(out.cls) ? "cls" : "obj";
    throw NumericalError(std::string("detection_loss: non-finite ") + part + " loss");
  }

  std::vector<std::shared_ptr<tensor::Node>> nodes;
  for (const auto& h : heads) nodes.push_back(h.node_ptr());
  out.total = tensor::Tensor::make_result({1, 1, 1, 1}, {out.total_value}, heads,
                                          [nodes, grads](tensor::Node& self) {
                                            const double up = self.grad[0];
                                            for (std::size_t l = 0; l < nodes.size(); ++l) {
                                              if (!nodes[l]->requires_grad) continue;
                                              const auto& g = (*grads)[l];
                                              auto& dst = nodes[l]->grad;
                                              for (std::size_t i = 0; i < g.size(); ++i)
                                                dst[i] += up * g[i];
                                            }
                                          });
  return out;
}

}  // namespace appledet::boxloss
