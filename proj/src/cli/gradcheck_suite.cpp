#include "appledet/cli/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "appledet/blocks/layers.hpp"
#include "appledet/blocks/network_spec.hpp"
#include "appledet/boxloss/detection_loss.hpp"
#include "appledet/boxloss/targets.hpp"
#include "appledet/common/rng.hpp"
#include "appledet/tensor/grad_check.hpp"
#include "appledet/tensor/ops.hpp"

namespace appledet::cli {

namespace {

using tensor::Mode;
using tensor::Shape;
using tensor::Tensor;

constexpr std::size_t kCoordinates = 16;

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(s, std::move(v), grad);
}

// Scalar probe: sum(y * r) with a fixed random r, so that no gradient
// direction is trivially zero.
Tensor project(const Tensor& y, const Tensor& r) { return tensor::sum(tensor::mul(y, r)); }

struct Tracker {
  GradCheckEntry entry;
  void record(const tensor::GradCheckResult& r, const std::string& label) {
    const double err = r.nan_found ? 1.0 : r.max_rel_error;
    if (err >= entry.max_rel_error) {
      entry.max_rel_error = err;
      entry.worst_case = label;
    }
  }
};

// Checks the input and every parameter of a block-like function.
void check_all(Tracker& t, const std::function<Tensor()>& loss, Tensor input,
               const std::vector<tensor::Parameter*>& params, const std::string& label,
               std::uint64_t seed) {
  tensor::GradCheckOptions opt{1e-4, kCoordinates, seed};
  if (input.defined()) t.record(tensor::grad_check(loss, input, opt), label + " input");
  for (auto* p : params) {
    opt.seed = mix_seed(opt.seed, 1);
    t.record(tensor::grad_check(loss, p->value, opt), label + " " + p->name);
  }
}

std::vector<tensor::Parameter*> collect(const std::function<void(const blocks::ParamVisitor&)>& visit) {
  std::vector<tensor::Parameter*> out;
  visit(blocks::ParamVisitor{[&](tensor::Parameter& p) { out.push_back(&p); }, nullptr});
  return out;
}

GradCheckEntry conv_bn_act(const GradCheckSuiteOptions& o) {
  Tracker t{{"conv_bn_act", 0, 0.0, o.block_threshold, ""}};
  Rng rng(mix_seed(o.seed, 1));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const int n = rng.integer(1, 3), ci = rng.integer(1, 4), co = rng.integer(1, 4);
    const int h = rng.integer(2, 6), w = rng.integer(2, 6);
    const int kernel = rng.bernoulli(0.5) ? 3 : 1, stride = rng.integer(1, 2);
    blocks::ConvBnAct block("cba", ci, co, kernel, stride, rng);
    Tensor x = random_tensor({n, ci, h, w}, rng);
    const Shape ys = block.forward(x, Mode::train).shape();
    const Tensor r = random_tensor(ys, rng, -1, 1, false);
    check_all(t, [&] { return project(block.forward(x, Mode::train), r); }, x,
              collect([&](const auto& v) { block.visit(v); }), x.shape().str(), rng.next());
    ++t.entry.cases;
  }
  return t.entry;
}

GradCheckEntry coordinate_attention(const GradCheckSuiteOptions& o) {
  Tracker t{{"ca", 0, 0.0, o.block_threshold, ""}};
  Rng rng(mix_seed(o.seed, 2));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const int n = rng.integer(1, 3), c = rng.integer(2, 6);
    const int h = rng.integer(1, 5), w = rng.integer(1, 5);
    blocks::CABlock block("ca", c, rng, rng.integer(1, 4));
    Tensor x = random_tensor({n, c, h, w}, rng);
    const Tensor r = random_tensor(x.shape(), rng, -1, 1, false);
    check_all(t, [&] { return project(block.forward(x, Mode::train), r); }, x,
              collect([&](const auto& v) { block.visit(v); }), x.shape().str(), rng.next());
    ++t.entry.cases;
  }
  return t.entry;
}

GradCheckEntry bifpn_fusion(const GradCheckSuiteOptions& o) {
  Tracker t{{"bifpn_fusion", 0, 0.0, o.block_threshold, ""}};
  Rng rng(mix_seed(o.seed, 3));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const int arity = rng.integer(2, 3);
    const int n = rng.integer(1, 2), c = rng.integer(1, 4), h = rng.integer(2, 4), w = rng.integer(2, 4);
    blocks::BiFPNNode node("node", arity, c, rng.integer(1, 4), rng);
    // Positive random weights keep the point away from the ReLU kink.
    for (double& v : node.weights().value.data()) v = rng.uniform(0.2, 2.0);
    std::vector<Tensor> inputs;
    for (int i = 0; i < arity; ++i) inputs.push_back(random_tensor({n, c, h, w}, rng));
    const Tensor r_fuse = random_tensor({n, c, h, w}, rng, -1, 1, false);
    const std::string label = std::to_string(arity) + "x" + inputs[0].shape().str();
    // Fusion alone: fusion weights and every input.
    const auto fused = [&] { return project(node.fuse(inputs), r_fuse); };
    tensor::GradCheckOptions opt{1e-4, kCoordinates, rng.next()};
    t.record(tensor::grad_check(fused, node.weights().value, opt), label + " fusion_weight");
    for (auto& in : inputs) t.record(tensor::grad_check(fused, in, opt), label + " input");
    // Whole node including the post convolution.
    const Tensor r = random_tensor(node.forward(inputs, Mode::train).shape(), rng, -1, 1, false);
    check_all(t, [&] { return project(node.forward(inputs, Mode::train), r); }, inputs[0],
              collect([&](const auto& v) { node.visit(v); }), label, rng.next());
    ++t.entry.cases;
  }
  return t.entry;
}

GradCheckEntry head(const GradCheckSuiteOptions& o) {
  Tracker t{{"head", 0, 0.0, o.block_threshold, ""}};
  Rng rng(mix_seed(o.seed, 4));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const int n = rng.integer(1, 2), c = rng.integer(1, 6), h = rng.integer(1, 4), w = rng.integer(1, 4);
    blocks::Conv2d conv("head", c, 21, 1, 1, 0, true, rng);
    Tensor x = random_tensor({n, c, h, w}, rng);
    const Tensor r = random_tensor({n, 21, h, w}, rng, -1, 1, false);
    check_all(t, [&] { return project(conv.forward(x), r); }, x,
              collect([&](const auto& v) { conv.visit(v); }), x.shape().str(), rng.next());
    ++t.entry.cases;
  }
  return t.entry;
}

boxloss::Box random_box(Rng& rng) {
  return {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.3, 3), rng.uniform(0.3, 3)};
}

// Scalar loss as a tensor op over a (1,1,1,4) box so grad_check can drive it.
GradCheckEntry ciou(const GradCheckSuiteOptions& o, boxloss::CiouForm form, const char* name) {
  Tracker t{{name, 0, 0.0, o.block_threshold, ""}};
  Rng rng(mix_seed(o.seed, form == boxloss::CiouForm::squared ? 5 : 6));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const boxloss::Box gt = random_box(rng);
    boxloss::Box p = random_box(rng);
    if (k % 2 == 0) {  // overlapping pairs as well as arbitrary ones
      p.cx = gt.cx + rng.uniform(-0.3, 0.3) * gt.w;
      p.cy = gt.cy + rng.uniform(-0.3, 0.3) * gt.h;
    }
    Tensor x = Tensor::from_data({1, 1, 1, 4}, {p.cx, p.cy, p.w, p.h}, true);
    const auto loss = [&] {
      const auto d = x.data();
      const boxloss::Box b{d[0], d[1], d[2], d[3]};
      const auto g = boxloss::ciou_loss_gradient(b, gt, form, boxloss::AlphaMode::differentiable);
      auto xin = x.node_ptr();
      return Tensor::make_result({1, 1, 1, 1}, {g.terms.loss}, {x}, [xin, g](tensor::Node& self) {
        for (int i = 0; i < 4; ++i) xin->grad[i] += self.grad[0] * g.d_pred[i];
      });
    };
    char label[96];
    std::snprintf(label, sizeof label, "pred (%.2f %.2f %.2f %.2f)", p.cx, p.cy, p.w, p.h);
    t.record(tensor::grad_check(loss, x, {1e-6, 0, 0}), label);
    ++t.entry.cases;
  }
  return t.entry;
}

GradCheckEntry bce(const GradCheckSuiteOptions& o) {
  Tracker t{{"bce", 0, 0.0, o.block_threshold, ""}};
  Rng rng(mix_seed(o.seed, 7));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const int n = rng.integer(1, 12);
    Tensor z = random_tensor({1, 1, 1, n}, rng, -8, 8);
    std::vector<double> y(n);
    for (double& v : y) v = rng.bernoulli(0.3) ? rng.uniform() : static_cast<double>(rng.integer(0, 1));
    const auto loss = [&] {
      const auto d = z.data();
      double total = 0.0;
      std::vector<double> grad(n);
      for (int i = 0; i < n; ++i) total += boxloss::bce_with_logit(d[i], y[i], &grad[i]) / n;
      auto zin = z.node_ptr();
      return Tensor::make_result({1, 1, 1, 1}, {total}, {z}, [zin, grad, n](tensor::Node& self) {
        for (int i = 0; i < n; ++i) zin->grad[i] += self.grad[0] * grad[i] / n;
      });
    };
    t.record(tensor::grad_check(loss, z, {1e-5, 0, 0}), "n=" + std::to_string(n));
    ++t.entry.cases;
  }
  return t.entry;
}

GradCheckEntry composite(const GradCheckSuiteOptions& o) {
  Tracker t{{"detection_loss", 0, 0.0, o.composite_threshold, ""}};
  Rng rng(mix_seed(o.seed, 8));
  for (int k = 0; k < o.cases_per_block; ++k) {
    const bool bc = k % 2 == 0;
    const auto spec = blocks::NetworkSpec::make(bc ? blocks::Variant::yolov5s_bc : blocks::Variant::yolov5s);
    const int n = rng.integer(1, 2);
    const int size = 32 * rng.integer(1, 2);
    std::vector<std::vector<boxloss::Box>> truths(n);
    for (auto& list : truths) {
      const int count = rng.integer(1, 3);
      for (int i = 0; i < count; ++i) {
        list.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.08, 0.5),
                        rng.uniform(0.08, 0.5), rng.integer(0, 1)});
      }
    }
    const auto targets = boxloss::assign_targets(truths, spec, size, size);
    std::vector<Tensor> heads;
    for (int s : spec.strides) {
      heads.push_back(random_tensor({n, spec.head_channels(), size / s, size / s}, rng, -2, 2));
    }
    boxloss::LossConfig cfg;
    cfg.ciou_form = k % 4 < 2 ? boxloss::CiouForm::squared : boxloss::CiouForm::unsquared;
    cfg.alpha_mode = boxloss::AlphaMode::differentiable;
    cfg.iou_scaled_objectness = false;
    const auto loss = [&] { return boxloss::detection_loss(heads, targets, spec, cfg).total; };
    const std::string label = std::string(bc ? "bc " : "base ") + std::to_string(n) + "x" +
                              std::to_string(size) + " " + std::to_string(targets.total()) + " positives";
    for (std::size_t l = 0; l < heads.size(); ++l) {
      t.record(tensor::grad_check(loss, heads[l], {1e-5, 48, rng.next()}),
               label + " s" + std::to_string(spec.strides[l]));
      // Positive slots carry the box and class terms; probe them directly.
      const auto& entries = targets.levels[l].entries;
      if (entries.empty()) continue;
      const auto& a = entries[static_cast<std::size_t>(rng.integer(0, static_cast<int>(entries.size()) - 1))];
      auto values = heads[l].data();
      const int gh = heads[l].shape().h, gw = heads[l].shape().w, per = spec.outputs_per_anchor();
      heads[l].zero_grad();
      loss().backward();
      for (int c = 0; c < per; ++c) {
        const std::size_t idx =
            ((static_cast<std::size_t>(a.image) * spec.head_channels() + a.anchor * per + c) * gh + a.row) * gw + a.col;
        const double analytic = heads[l].grad()[idx];
        const double original = values[idx];
        tensor::NoGradGuard no_grad;
        values[idx] = original + 1e-5;
        const double plus = loss().item();
        values[idx] = original - 1e-5;
        const double minus = loss().item();
        values[idx] = original;
        const double numeric = (plus - minus) / 2e-5;
        tensor::GradCheckResult r;
        r.coordinates_checked = 1;
        r.max_rel_error = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        t.record(r, label + " positive slot s" + std::to_string(spec.strides[l]));
      }
    }
    ++t.entry.cases;
  }
  return t.entry;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& o) {
  return {conv_bn_act(o),
          coordinate_attention(o),
          bifpn_fusion(o),
          head(o),
          ciou(o, boxloss::CiouForm::squared, "ciou_squared"),
          ciou(o, boxloss::CiouForm::unsquared, "ciou_unsquared"),
          bce(o),
          composite(o)};
}

std::string format_gradcheck_table(const std::vector<GradCheckEntry>& entries) {
  std::string out = "block\tcases\tmax_rel_error\tthreshold\tstatus\tworst_case\n";
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%s\t%d\t%.3e\t%.0e\t%s\t%s\n", e.block.c_str(), e.cases,
                  e.max_rel_error, e.threshold, e.passed() ? "pass" : "FAIL", e.worst_case.c_str());
    out += buf;
  }
  return out;
}

}  // namespace appledet::cli
