#include "appledet/boxloss/decode.hpp"

#include <cmath>

#include "appledet/common/error.hpp"

namespace appledet::boxloss {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

Box decode_cell(const std::array<double, 4>& raw, int row, int col, int stride,
                const blocks::AnchorBox& anchor) {
  const double sx = 2.0 * sigmoid(raw[0]);
  const double sy = 2.0 * sigmoid(raw[1]);
  const double sw = 2.0 * sigmoid(raw[2]);
  const double sh = 2.0 * sigmoid(raw[3]);
  return Box{(sx - 0.5 + col) * stride, (sy - 0.5 + row) * stride, sw * sw * anchor.w,
             sh * sh * anchor.h, kApple};
}

std::array<double, 4> encode_cell(const Box& truth_px, int row, int col, int stride,
                                  const blocks::AnchorBox& anchor) {
  const double ox = truth_px.cx / stride - col;
  const double oy = truth_px.cy / stride - row;
  const double rw = truth_px.w / anchor.w;
  const double rh = truth_px.h / anchor.h;
  require(ox > -0.5 && ox < 1.5 && oy > -0.5 && oy < 1.5,
          "encode_cell: truth center outside the cell's decode range");
  require(rw > 0.0 && rw < 4.0 && rh > 0.0 && rh < 4.0,
          "encode_cell: truth size outside (0, 4) anchors");
  return {logit((ox + 0.5) / 2.0), logit((oy + 0.5) / 2.0), logit(std::sqrt(rw) / 2.0),
          logit(std::sqrt(rh) / 2.0)};
}

std::vector<Detection> decode_boxes(const tensor::Tensor& raw, const blocks::NetworkSpec& spec,
                                    int level, const DecodeOptions& options) {
  const tensor::Shape s = raw.shape();
  const int per_anchor = spec.outputs_per_anchor();
  require(level >= 0 && level < static_cast<int>(spec.strides.size()),
          "decode_boxes: level out of range");
  require(s.c == spec.head_channels(),
          "decode_boxes: head output " + s.str() + " does not have " +
              std::to_string(spec.head_channels()) + " channels");
  const int stride = spec.strides[level];
  const auto& anchors = spec.anchors[level];
  std::vector<Detection> out;
  for (int n = 0; n < s.n; ++n) {
    for (int a = 0; a < blocks::NetworkSpec::kAnchorsPerStride; ++a) {
      const int base = a * per_anchor;
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const double obj = sigmoid(raw.at(n, base + 4, y, x));
          if (obj < options.conf_threshold) continue;
          const Box box = decode_cell({raw.at(n, base, y, x), raw.at(n, base + 1, y, x),
                                       raw.at(n, base + 2, y, x), raw.at(n, base + 3, y, x)},
                                      y, x, stride, anchors[a]);
          int best = 0;
          double best_conf = -1.0;
          for (int k = 0; k < spec.num_classes; ++k) {
            const double conf = obj * sigmoid(raw.at(n, base + 5 + k, y, x));
            if (options.multi_label) {
              if (conf >= options.conf_threshold) {
                Box b = box;
                b.class_id = k;
                out.push_back({b, conf, n});
              }
            } else if (conf > best_conf) {
              best_conf = conf;
              best = k;
            }
          }
          if (!options.multi_label && best_conf >= options.conf_threshold) {
            Box b = box;
            b.class_id = best;
            out.push_back({b, best_conf, n});
          }
        }
      }
    }
  }
  return out;
}

}  // namespace appledet::boxloss
