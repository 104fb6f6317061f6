#include "appledet/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "appledet/common/error.hpp"

namespace appledet::tensor {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  std::ostringstream out;
  out << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return out.str();
}

void Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_data(shape, std::vector<double>(shape.numel(), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return from_data(shape, std::vector<double>(shape.numel(), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
          "negative extent in shape " + shape.str());
  require(values.size() == shape.numel(),
          "data length " + std::to_string(values.size()) + " does not match shape " +
              shape.str());
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1, 1, 1, 1}, {value}, requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::vector<Tensor> parents,
                           std::function<void(Node&)> backward_fn) {
  Tensor out = from_data(shape, std::move(values), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(parents.begin(), parents.end(), [](const Tensor& p) {
    return p.defined() && p.requires_grad();
  });
  if (!any) return out;
  out.node_->requires_grad = true;
  for (auto& p : parents) {
    if (p.defined()) out.node_->parents.push_back(p.node_);
  }
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

void Tensor::set_requires_grad(bool value) {
  require(node_->is_leaf(), "requires_grad can only be changed on a leaf tensor");
  node_->requires_grad = value;
}

double Tensor::item() const {
  require(numel() == 1, "item() needs a single-element tensor, got " + shape().str());
  return node_->data[0];
}

double Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = node_->shape;
  return node_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

double& Tensor::at(int n, int c, int h, int w) {
  const Shape& s = node_->shape;
  return node_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  require(numel() == 1, "backward() needs a scalar loss, got shape " + shape().str());
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; `order` ends up inputs-first.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->is_leaf()) {
      node->ensure_grad();
    } else {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

Tensor Tensor::detach() const {
  return from_data(node_->shape, node_->data, false);
}

Parameter::Parameter(std::string name_, Shape shape)
    : name(std::move(name_)),
      value(Tensor::zeros(shape, true)),
      momentum(shape.numel(), 0.0) {}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

void require_finite(std::span<const double> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError("non-finite value in " + what + " at index " + std::to_string(i));
    }
  }
}

}  // namespace appledet::tensor
