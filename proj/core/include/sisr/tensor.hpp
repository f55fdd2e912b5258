#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace sisr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);

// Storage and graph record behind a Tensor handle. Interior nodes keep their
// inputs alive until the owning tape is cleared.
struct Node {
  Shape shape;
  std::vector<double> data;
  // Empty until something accumulates into it.
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Dense row-major float64 tensor with shared storage. Copies of a Tensor
// alias the same node; use detach() for an independent value copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }
  // First and last extents of a rank-2 view; rank-1 tensors are a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when nothing has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Append-only record of differentiable operations in creation order, which is
// a topological order by construction. A tape is confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<Node> node) { nodes_.push_back(std::move(node)); }

  // Reverse sweep from a scalar, finite loss. Gradients accumulate
  // additively into every reachable tensor that requires grad, including
  // leaves that persist across tapes (parameters).
  void backward(const Tensor& loss);

  // Drops every interior node. Leaf gradients are kept.
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Tape that new operations record onto in this thread, or nullptr.
  static Tape* active();

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

// Makes `tape` the active tape for the current thread until destruction.
// Without an active tape operations evaluate forward only.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace sisr::ad
