#include <Eigen/Core>

#include "appledet/common/error.hpp"
#include "appledet/tensor/ops.hpp"

namespace appledet::tensor {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  int c_in, h, w, k, stride, pad, oh, ow;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  int rows() const { return c_in * k * k; }
  int cols() const { return oh * ow; }
};

// col[(c, ky, kx), (oy, ox)] = x[c, oy*s - p + ky, ox*s - p + kx], zero outside.
void im2col(const double* x, const ConvGeometry& g, double* col) {
  for (int c = 0; c < g.c_in; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        for (int oy = 0; oy < g.oh; ++oy) {
          const int y = oy * g.stride - g.pad + ky;
          double* dst = col + static_cast<std::size_t>(oy) * g.ow;
          if (y < 0 || y >= g.h) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(y) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int xx = ox * g.stride - g.pad + kx;
            dst[ox] = (xx >= 0 && xx < g.w) ? src[xx] : 0.0;
          }
        }
        col += static_cast<std::size_t>(g.oh) * g.ow;
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  for (int c = 0; c < g.c_in; ++c) {
    double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        for (int oy = 0; oy < g.oh; ++oy) {
          const int y = oy * g.stride - g.pad + ky;
          const double* src = col + static_cast<std::size_t>(oy) * g.ow;
          if (y < 0 || y >= g.h) continue;
          double* dst = plane + static_cast<std::size_t>(y) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int xx = ox * g.stride - g.pad + kx;
            if (xx >= 0 && xx < g.w) dst[xx] += src[ox];
          }
        }
        col += static_cast<std::size_t>(g.oh) * g.ow;
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int pad) {
  const Shape is = input.shape();
  const Shape ws = weight.shape();
  require(ws.h == ws.w, "conv2d: kernel must be square, weight shape " + ws.str());
  require(is.c == ws.c, "conv2d: input " + is.str() + " has " + std::to_string(is.c) +
                            " channels but weight " + ws.str() + " expects " +
                            std::to_string(ws.c));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: pad must be >= 0");
  require(ws.h <= is.h + 2 * pad && ws.w <= is.w + 2 * pad,
          "conv2d: kernel " + ws.str() + " larger than padded input " + is.str());
  if (bias.defined()) {
    require(bias.numel() == static_cast<std::size_t>(ws.n),
            "conv2d: bias " + bias.shape().str() + " does not match " +
                std::to_string(ws.n) + " output channels");
  }

  const ConvGeometry g{is.c, is.h, is.w, ws.h, stride, pad,
                       (is.h + 2 * pad - ws.h) / stride + 1,
                       (is.w + 2 * pad - ws.w) / stride + 1};
  const int c_out = ws.n;
  const Shape os{is.n, c_out, g.oh, g.ow};
  std::vector<double> out(os.numel());

  const ConstMatrixMap W(weight.data().data(), c_out, g.rows());
  std::vector<double> col;
  if (!g.pointwise()) col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
  const std::size_t in_len = static_cast<std::size_t>(is.c) * is.h * is.w;
  const std::size_t out_len = static_cast<std::size_t>(c_out) * g.cols();
  for (int n = 0; n < is.n; ++n) {
    const double* x = input.data().data() + n * in_len;
    const double* src = x;
    if (!g.pointwise()) {
      im2col(x, g, col.data());
      src = col.data();
    }
    MatrixMap Y(out.data() + n * out_len, c_out, g.cols());
    Y.noalias() = W * ConstMatrixMap(src, g.rows(), g.cols());
    if (bias.defined()) {
      const auto b = bias.data();
      for (int c = 0; c < c_out; ++c) Y.row(c).array() += b[c];
    }
  }

  auto xn = input.node_ptr();
  auto wn = weight.node_ptr();
  auto bn = bias.defined() ? bias.node_ptr() : nullptr;
  std::vector<Tensor> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::make_result(
      os, std::move(out), parents, [xn, wn, bn, g, c_out, in_len, out_len](Node& self) {
        const int batch = xn->shape.n;
        const ConstMatrixMap W(wn->data.data(), c_out, g.rows());
        std::vector<double> col;
        if (!g.pointwise()) col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
        std::vector<double> dcol(static_cast<std::size_t>(g.rows()) * g.cols());
        for (int n = 0; n < batch; ++n) {
          const ConstMatrixMap dY(self.grad.data() + n * out_len, c_out, g.cols());
          if (bn && bn->requires_grad) {
            // Plain loop: Eigen's vectorized sum peels by address, which makes
            // the rounding depend on where the buffer landed.
            const double* dy = self.grad.data() + n * out_len;
            for (int c = 0; c < c_out; ++c) {
              double acc = 0.0;
              for (int j = 0; j < g.cols(); ++j) acc += dy[static_cast<std::size_t>(c) * g.cols() + j];
              bn->grad[c] += acc;
            }
          }
          if (wn->requires_grad) {
            const double* src = xn->data.data() + n * in_len;
            if (!g.pointwise()) {
              im2col(src, g, col.data());
              src = col.data();
            }
            MatrixMap dW(wn->grad.data(), c_out, g.rows());
            dW.noalias() += dY * ConstMatrixMap(src, g.rows(), g.cols()).transpose();
          }
          if (xn->requires_grad) {
            double* dx = xn->grad.data() + n * in_len;
            if (g.pointwise()) {
              MatrixMap dX(dx, g.rows(), g.cols());
              dX.noalias() += W.transpose() * dY;
            } else {
              MatrixMap dC(dcol.data(), g.rows(), g.cols());
              dC.noalias() = W.transpose() * dY;
              col2im_add(dcol.data(), g, dx);
            }
          }
        }
      });
}

}  // namespace appledet::tensor
