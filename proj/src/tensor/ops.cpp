#include "appledet/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "appledet/common/error.hpp"

namespace appledet::tensor {

namespace {

constexpr double kSigmoidClamp = 30.0;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto xin = x.node_ptr();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xin, df](Node& self) {
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      xin->grad[i] += g[i] * df(xin->data[i], self.data[i]);
    }
  });
}

// Index arithmetic for the restricted h/w broadcast.
struct Broadcast {
  Shape out;
  int a_h_step, a_w_step, b_h_step, b_w_step;
};

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const auto fail = [&] {
    throw InvalidInput(std::string(op) + ": incompatible shapes " + a.str() + " and " +
                       b.str() + " (broadcast only along h or w of extent 1)");
  };
  if (a.n != b.n || a.c != b.c) fail();
  if (a.h != b.h && a.h != 1 && b.h != 1) fail();
  if (a.w != b.w && a.w != 1 && b.w != 1) fail();
  Broadcast bc;
  bc.out = {a.n, a.c, std::max(a.h, b.h), std::max(a.w, b.w)};
  bc.a_h_step = a.h == 1 ? 0 : 1;
  bc.a_w_step = a.w == 1 ? 0 : 1;
  bc.b_h_step = b.h == 1 ? 0 : 1;
  bc.b_w_step = b.w == 1 ? 0 : 1;
  return bc;
}

// Calls fn(out_index, a_index, b_index) for every output cell.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, const Shape& a, const Shape& b, Fn fn) {
  const Shape& o = bc.out;
  std::size_t oi = 0;
  for (int n = 0; n < o.n; ++n) {
    for (int c = 0; c < o.c; ++c) {
      const std::size_t a_plane = (static_cast<std::size_t>(n) * a.c + c) * a.h * a.w;
      const std::size_t b_plane = (static_cast<std::size_t>(n) * b.c + c) * b.h * b.w;
      for (int y = 0; y < o.h; ++y) {
        const std::size_t a_row = a_plane + static_cast<std::size_t>(y * bc.a_h_step) * a.w;
        const std::size_t b_row = b_plane + static_cast<std::size_t>(y * bc.b_h_step) * b.w;
        for (int x = 0; x < o.w; ++x, ++oi) {
          fn(oi, a_row + x * bc.a_w_step, b_row + x * bc.b_w_step);
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode) {
  const Shape s = input.shape();
  const int channels = s.c;
  require(gamma.numel() == static_cast<std::size_t>(channels) &&
              beta.numel() == static_cast<std::size_t>(channels),
          "batchnorm: gamma/beta length must equal channel count " +
              std::to_string(channels) + ", got gamma " + gamma.shape().str());
  require(state.running_mean.size() == static_cast<std::size_t>(channels),
          "batchnorm: running statistics sized for a different channel count");
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t count = plane * s.n;
  const auto x = input.data();
  const auto g = gamma.data();
  const auto b = beta.data();

  std::vector<double> mean(channels), invstd(channels);
  if (mode == Mode::train) {
    require(count >= 2, "batchnorm: train mode needs n*h*w >= 2 per channel, got " +
                            std::to_string(count));
    for (int c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = sq / static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] =
          (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  std::vector<double> out(x.size());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      const double k = g[c] * invstd[c];
      const double off = b[c] - mean[c] * k;
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = x[base + i] * k + off;
    }
  }

  auto xin = input.node_ptr();
  auto gin = gamma.node_ptr();
  auto bin = beta.node_ptr();
  return Tensor::make_result(
      s, std::move(out), {input, gamma, beta},
      [xin, gin, bin, mean, invstd, mode, s, plane, count](Node& self) {
        const int channels = s.c;
        const auto& dy = self.grad;
        const auto& x = xin->data;
        for (int c = 0; c < channels; ++c) {
          // sum(dy) and sum(dy * xhat) over the channel.
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < s.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double xhat = (x[base + i] - mean[c]) * invstd[c];
              sum_dy += dy[base + i];
              sum_dy_xhat += dy[base + i] * xhat;
            }
          }
          if (gin->requires_grad) gin->grad[c] += sum_dy_xhat;
          if (bin->requires_grad) bin->grad[c] += sum_dy;
          if (!xin->requires_grad) continue;
          const double gamma_c = gin->data[c];
          if (mode == Mode::train) {
            const double inv_count = 1.0 / static_cast<double>(count);
            for (int n = 0; n < s.n; ++n) {
              const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (x[base + i] - mean[c]) * invstd[c];
                xin->grad[base + i] += gamma_c * invstd[c] * inv_count *
                                       (static_cast<double>(count) * dy[base + i] - sum_dy -
                                        xhat * sum_dy_xhat);
              }
            }
          } else {
            const double k = gamma_c * invstd[c];
            for (int n = 0; n < s.n; ++n) {
              const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) xin->grad[base + i] += k * dy[base + i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) { return stable_sigmoid(std::clamp(v, -kSigmoidClamp, kSigmoidClamp)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  if (a.shape() == b.shape()) {
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
      for (auto* p : {an.get(), bn.get()}) {
        if (!p->requires_grad) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    });
  }
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), "add");
  std::vector<double> out(bc.out.numel());
  const auto x = a.data();
  const auto y = b.data();
  for_each_broadcast(bc, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] + y[j]; });
  const Shape as = a.shape(), bs = b.shape();
  return Tensor::make_result(bc.out, std::move(out), {a, b}, [an, bn, bc, as, bs](Node& self) {
    for_each_broadcast(bc, as, bs, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (an->requires_grad) an->grad[i] += self.grad[o];
      if (bn->requires_grad) bn->grad[j] += self.grad[o];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), "mul");
  std::vector<double> out(bc.out.numel());
  const auto x = a.data();
  const auto y = b.data();
  for_each_broadcast(bc, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] * y[j]; });
  const Shape as = a.shape(), bs = b.shape();
  return Tensor::make_result(bc.out, std::move(out), {a, b}, [an, bn, bc, as, bs](Node& self) {
    for_each_broadcast(bc, as, bs, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (an->requires_grad) an->grad[i] += self.grad[o] * bn->data[j];
      if (bn->requires_grad) bn->grad[j] += self.grad[o] * an->data[i];
    });
  });
}

// ---------------------------------------------------------------------------

Tensor directional_avg_pool(const Tensor& x, Axis axis) {
  const Shape s = x.shape();
  require(s.h >= 1 && s.w >= 1, "directional_avg_pool: empty spatial extent " + s.str());
  const auto in = x.data();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  auto xn = x.node_ptr();
  if (axis == Axis::width) {
    const Shape os{s.n, s.c, s.h, 1};
    std::vector<double> out(os.numel());
    const double inv = 1.0 / s.w;
    for (std::size_t p = 0; p < planes; ++p) {
      for (int y = 0; y < s.h; ++y) {
        const double* row = in.data() + (p * s.h + y) * s.w;
        double acc = 0.0;
        for (int i = 0; i < s.w; ++i) acc += row[i];
        out[p * s.h + y] = acc * inv;
      }
    }
    return Tensor::make_result(os, std::move(out), {x}, [xn, s, planes, inv](Node& self) {
      for (std::size_t p = 0; p < planes; ++p) {
        for (int y = 0; y < s.h; ++y) {
          const double g = self.grad[p * s.h + y] * inv;
          double* row = xn->grad.data() + (p * s.h + y) * s.w;
          for (int i = 0; i < s.w; ++i) row[i] += g;
        }
      }
    });
  }
  const Shape os{s.n, s.c, 1, s.w};
  std::vector<double> out(os.numel(), 0.0);
  const double inv = 1.0 / s.h;
  for (std::size_t p = 0; p < planes; ++p) {
    double* dst = out.data() + p * s.w;
    for (int y = 0; y < s.h; ++y) {
      const double* row = in.data() + (p * s.h + y) * s.w;
      for (int i = 0; i < s.w; ++i) dst[i] += row[i];
    }
    for (int i = 0; i < s.w; ++i) dst[i] *= inv;
  }
  return Tensor::make_result(os, std::move(out), {x}, [xn, s, planes, inv](Node& self) {
    for (std::size_t p = 0; p < planes; ++p) {
      const double* g = self.grad.data() + p * s.w;
      for (int y = 0; y < s.h; ++y) {
        double* row = xn->grad.data() + (p * s.h + y) * s.w;
        for (int i = 0; i < s.w; ++i) row[i] += g[i] * inv;
      }
    }
  });
}

Tensor maxpool(const Tensor& x, int kernel, int stride, int pad) {
  const Shape s = x.shape();
  require(kernel >= 1 && stride >= 1 && pad >= 0, "maxpool: invalid kernel/stride/pad");
  require(kernel <= s.h + 2 * pad && kernel <= s.w + 2 * pad,
          "maxpool: kernel " + std::to_string(kernel) + " larger than padded input " + s.str());
  const int oh = (s.h + 2 * pad - kernel) / stride + 1;
  const int ow = (s.w + 2 * pad - kernel) / stride + 1;
  const Shape os{s.n, s.c, oh, ow};
  std::vector<double> out(os.numel());
  std::vector<std::size_t> argmax(os.numel());
  const auto in = x.data();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * s.h * s.w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = base;
        for (int ky = 0; ky < kernel; ++ky) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= s.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int xx = ox * stride - pad + kx;
            if (xx < 0 || xx >= s.w) continue;
            const std::size_t i = base + static_cast<std::size_t>(y) * s.w + xx;
            if (in[i] > best) {
              best = in[i];
              best_i = i;
            }
          }
        }
        out[o] = best;
        argmax[o] = best_i;
      }
    }
  }
  auto xn = x.node_ptr();
  return Tensor::make_result(os, std::move(out), {x}, [xn, argmax = std::move(argmax)](Node& self) {
    for (std::size_t i = 0; i < argmax.size(); ++i) xn->grad[argmax[i]] += self.grad[i];
  });
}

Tensor maxpool2(const Tensor& x) {
  const Shape s = x.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0,
          "maxpool2: spatial extents must be even, got " + s.str());
  return maxpool(x, 2, 2, 0);
}

Tensor upsample_nearest2(const Tensor& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  std::vector<double> out(os.numel());
  const auto in = x.data();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t p = 0; p < planes; ++p) {
    for (int y = 0; y < os.h; ++y) {
      const double* src = in.data() + (p * s.h + y / 2) * s.w;
      double* dst = out.data() + (p * os.h + y) * os.w;
      for (int xx = 0; xx < os.w; ++xx) dst[xx] = src[xx / 2];
    }
  }
  auto xn = x.node_ptr();
  return Tensor::make_result(os, std::move(out), {x}, [xn, s, os, planes](Node& self) {
    for (std::size_t p = 0; p < planes; ++p) {
      for (int y = 0; y < os.h; ++y) {
        double* dst = xn->grad.data() + (p * s.h + y / 2) * s.w;
        const double* g = self.grad.data() + (p * os.h + y) * os.w;
        for (int xx = 0; xx < os.w; ++xx) dst[xx / 2] += g[xx];
      }
    }
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: shape " + s.str() + " incompatible with " + first.str());
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  std::vector<double> out(os.numel());
  std::vector<std::shared_ptr<Node>> nodes;
  for (int n = 0; n < first.n; ++n) {
    double* dst = out.data() + static_cast<std::size_t>(n) * channels * plane;
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
      const double* src = p.data().data() + n * len;
      std::copy(src, src + len, dst);
      dst += len;
    }
  }
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  return Tensor::make_result(os, std::move(out), parts, [nodes, first, channels, plane](Node& self) {
    for (int n = 0; n < first.n; ++n) {
      const double* g = self.grad.data() + static_cast<std::size_t>(n) * channels * plane;
      for (const auto& node : nodes) {
        const std::size_t len = static_cast<std::size_t>(node->shape.c) * plane;
        if (node->requires_grad) {
          double* dst = node->grad.data() + n * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
        }
        g += len;
      }
    }
  });
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  const Shape a = top.shape(), b = bottom.shape();
  require(a.n == b.n && a.c == b.c && a.w == b.w,
          "concat_rows: shapes " + a.str() + " and " + b.str() + " differ outside h");
  const Shape os{a.n, a.c, a.h + b.h, a.w};
  const std::size_t la = static_cast<std::size_t>(a.h) * a.w;
  const std::size_t lb = static_cast<std::size_t>(b.h) * b.w;
  const std::size_t planes = static_cast<std::size_t>(a.n) * a.c;
  std::vector<double> out(os.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(top.data().data() + p * la, la, out.data() + p * (la + lb));
    std::copy_n(bottom.data().data() + p * lb, lb, out.data() + p * (la + lb) + la);
  }
  auto an = top.node_ptr(), bn = bottom.node_ptr();
  return Tensor::make_result(os, std::move(out), {top, bottom},
                             [an, bn, la, lb, planes](Node& self) {
                               for (std::size_t p = 0; p < planes; ++p) {
                                 const double* g = self.grad.data() + p * (la + lb);
                                 if (an->requires_grad) {
                                   for (std::size_t i = 0; i < la; ++i) an->grad[p * la + i] += g[i];
                                 }
                                 if (bn->requires_grad) {
                                   for (std::size_t i = 0; i < lb; ++i)
                                     bn->grad[p * lb + i] += g[la + i];
                                 }
                               }
                             });
}

namespace {

Tensor slice_rows(const Tensor& x, int begin, int rows) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, rows, s.w};
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const std::size_t in_len = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t len = static_cast<std::size_t>(rows) * s.w;
  const std::size_t off = static_cast<std::size_t>(begin) * s.w;
  std::vector<double> out(os.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(x.data().data() + p * in_len + off, len, out.data() + p * len);
  }
  auto xn = x.node_ptr();
  return Tensor::make_result(os, std::move(out), {x}, [xn, planes, in_len, len, off](Node& self) {
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < len; ++i) xn->grad[p * in_len + off + i] += self.grad[p * len + i];
    }
  });
}

}  // namespace

std::pair<Tensor, Tensor> split_spatial(const Tensor& x, int first_rows) {
  const Shape s = x.shape();
  require(s.w == 1, "split_spatial: expects a single-column map, got " + s.str());
  require(first_rows >= 0 && first_rows <= s.h,
          "split_spatial: split point " + std::to_string(first_rows) + " outside " + s.str());
  return {slice_rows(x, 0, first_rows), slice_rows(x, first_rows, s.h - first_rows)};
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape.numel() == x.numel(),
          "reshape: cannot view " + x.shape().str() + " as " + shape.str());
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xn = x.node_ptr();
  return Tensor::make_result(shape, std::move(out), {x}, [xn](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------

std::vector<double> fusion_coefficients(std::span<const double> raw_weights, double eps) {
  double total = eps;
  for (double w : raw_weights) total += std::max(w, 0.0);
  std::vector<double> out;
  out.reserve(raw_weights.size());
  for (double w : raw_weights) out.push_back(std::max(w, 0.0) / total);
  return out;
}

Tensor weighted_fusion(const std::vector<Tensor>& inputs, const Tensor& weights, double eps) {
  require(!inputs.empty(), "weighted_fusion: no inputs");
  require(weights.numel() == inputs.size(),
          "weighted_fusion: " + std::to_string(weights.numel()) + " weights for " +
              std::to_string(inputs.size()) + " inputs");
  require(eps > 0.0, "weighted_fusion: epsilon must be positive");
  const Shape s = inputs.front().shape();
  for (const auto& t : inputs) {
    require(t.shape() == s, "weighted_fusion: input " + t.shape().str() +
                                " does not match target resolution " + s.str());
  }
  const std::vector<double> coef = fusion_coefficients(weights.data(), eps);
  std::vector<double> out(s.numel(), 0.0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto in = inputs[k].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coef[k] * in[i];
  }
  std::vector<Tensor> parents = inputs;
  parents.push_back(weights);
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& t : inputs) nodes.push_back(t.node_ptr());
  auto wn = weights.node_ptr();
  return Tensor::make_result(s, std::move(out), parents, [nodes, wn, coef, eps](Node& self) {
    const std::size_t k = nodes.size();
    std::vector<double> dcoef(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& in = nodes[j]->data;
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * in[i];
      dcoef[j] = acc;
      if (nodes[j]->requires_grad) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          nodes[j]->grad[i] += coef[j] * self.grad[i];
      }
    }
    if (!wn->requires_grad) return;
    double total = eps;
    for (double w : wn->data) total += std::max(w, 0.0);
    double weighted = 0.0;  // sum_i dcoef_i * w_i+ / total^2
    for (std::size_t i = 0; i < k; ++i) weighted += dcoef[i] * std::max(wn->data[i], 0.0);
    weighted /= total * total;
    for (std::size_t j = 0; j < k; ++j) {
      if (wn->data[j] > 0.0) wn->grad[j] += dcoef[j] / total - weighted;
    }
  });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto xn = x.node_ptr();
  return Tensor::make_result({1, 1, 1, 1}, {acc}, {x}, [xn](Node& self) {
    const double g = self.grad[0];
    for (double& v : xn->grad) v += g;
  });
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace appledet::tensor
