#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace appledet::tensor {

/// (batch, channels, rows, cols).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

enum class Mode { train, eval };

/// One entry of the computation record. Owned through shared_ptr so that a
/// result keeps its inputs alive until it is released.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Result of a differentiable op. When gradient recording is disabled or no
  /// parent requires grad, the history is dropped and `backward_fn` ignored.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(Node&)> backward_fn);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value);

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  /// Empty until a backward pass has reached this tensor.
  std::span<double> grad() { return node_->grad; }
  std::span<const double> grad() const { return node_->grad; }

  double item() const;
  double at(int n, int c, int h, int w) const;
  double& at(int n, int c, int h, int w);

  /// Zero this tensor's gradient buffer. Gradients accumulate across
  /// backward calls until zeroed.
  void zero_grad();

  /// Reverse-mode sweep from a scalar. Leaf gradients accumulate;
  /// intermediate gradients are reset at the start of each sweep.
  void backward() const;

  /// Same values, no history, never requires grad.
  Tensor detach() const;
  /// Deep copy of the values only.
  Tensor clone() const { return detach(); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// True while ops record history (thread-local).
bool grad_enabled();

/// Disables history recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// A trainable tensor with a stable name and an optimizer buffer.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> momentum;
  /// Weight decay applies (convolution kernels only).
  bool decay = false;

  Parameter() = default;
  Parameter(std::string name, Shape shape);
  std::size_t numel() const { return value.numel(); }
};

/// Rounds every value to the nearest binary32, so that parameters survive a
/// 32-bit checkpoint bit-exactly.
void round_to_float(std::span<double> values);

/// Throws NumericalError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

}  // namespace appledet::tensor
