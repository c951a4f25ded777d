#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "advdet/core/error.hpp"

namespace advdet::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Logical layout of a node value. Image tensors are NHWC and stored as a
/// [n*h*w x c] row-major matrix; flat tensors use h = w = 1.
struct TensorShape {
  int n = 0, h = 1, w = 1, c = 0;

  static TensorShape flat(int rows, int cols) { return {rows, 1, 1, cols}; }
  Eigen::Index rows() const { return static_cast<Eigen::Index>(n) * h * w; }
  bool operator==(const TensorShape&) const = default;
  std::string str() const {
    return "[" + std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w) + "x" +
           std::to_string(c) + "]";
  }
};

/// A trainable tensor. Gradients accumulate into `grad` across backward passes
/// until `zero_grad` is called.
template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<T>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Reverse-mode tape. Nodes are appended in topological order by construction,
/// so backward is a single reverse sweep. One graph per training step.
template <class T>
class Graph {
 public:
  using Mat = Matrix<T>;
  /// Receives the graph and the gradient of the node; accumulates into parents.
  using BackwardFn = std::function<void(Graph&, const Mat&)>;

  /// With grad disabled, parameters enter as constants and no backward closures are kept.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value, TensorShape shape) { return push(std::move(value), shape, false, nullptr, {}); }

  /// Leaf that requires a gradient but is not bound to a Parameter (used in checks).
  Var variable(Mat value, TensorShape shape) { return push(std::move(value), shape, grad_enabled_, nullptr, {}); }

  Var param(Parameter<T>& p) {
    return push(p.value, TensorShape::flat(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols())),
                grad_enabled_, grad_enabled_ ? &p : nullptr, {});
  }

  /// Appends an op node. `fn` is dropped when no parent needs a gradient.
  Var op(Mat value, TensorShape shape, std::initializer_list<Var> parents, BackwardFn fn) {
    return op(std::move(value), shape, std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
  }

  Var op(Mat value, TensorShape shape, std::span<const Var> parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || node(p).requires_grad;
    return push(std::move(value), shape, needs, nullptr, needs ? std::move(fn) : BackwardFn{});
  }

  const Mat& value(Var v) const { return node(v).value; }
  const TensorShape& shape(Var v) const { return node(v).shape; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient of the last backward root w.r.t. `v` (zeros if unreached).
  Mat grad(Var v) const {
    const auto& n = node(v);
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  T scalar(Var v) const {
    const auto& val = value(v);
    if (val.size() != 1) throw ShapeError("scalar() on non-scalar node " + node(v).shape.str());
    return val(0, 0);
  }

  void accumulate(Var v, const Mat& delta) {
    auto& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Backpropagates from a scalar root; parameter gradients are added to Parameter::grad.
  void backward(Var root) {
    if (value(root).size() != 1) throw ShapeError("backward root must be scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    node(root).grad = Mat::Constant(1, 1, T(1));
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      // parents have smaller ids, so n.grad is not written while fn runs
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    TensorShape shape;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var push(Mat value, TensorShape shape, bool requires_grad, Parameter<T>* p, BackwardFn fn) {
    if (value.rows() != shape.rows() || value.cols() != shape.c) {
      throw ShapeError("node value " + std::to_string(value.rows()) + "x" + std::to_string(value.cols()) +
                       " does not match shape " + shape.str());
    }
    nodes_.push_back(Node{std::move(value), Mat(), shape, requires_grad, p, std::move(fn)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ContractViolation("invalid graph variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractViolation("invalid graph variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace advdet::ad
