#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xmamba/errors.hpp"

namespace xmamba {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// One record of the tape: the op's output buffer, its parents, and a closure
// that pushes adjoints from this record's grad into the parents' grads.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // adjoint buffer; allocated lazily
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;  // set once backward has replayed this record
  std::uint64_t seq = 0;  // creation order; parents always precede children
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> grad_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

std::uint64_t next_seq();
void check_finite(std::span<const double> values, const char* what);

}  // namespace detail

// Dense row-major float64 tensor. Copies share the underlying node (cheap
// handle semantics); values are immutable after construction except grad
// population by backward and leaf updates by the optimizer between graphs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  std::span<const double> data() const { return node_->data; }

  // Mutable access is for leaf initialization and optimizer updates between
  // graph executions; never mutate a tensor that sits inside a live graph.
  std::span<double> data_mut() { return node_->data; }

  double value() const;  // numel()==1 convenience
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t i, std::size_t j) const {
    return node_->data[i * node_->shape[1] + j];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return node_->data[(i * node_->shape[1] + j) * node_->shape[2] + k];
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Detached copy of the values (leaf, no history).
  Tensor detached(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Records an op output on the tape. Validates finiteness of the produced
// values; links parents and the adjoint closure only when grad is needed.
Tensor make_op(Shape shape, std::vector<double> data, const char* op_name,
               std::vector<Tensor> parents, std::function<void(Node&)> grad_fn);

// parent.grad[i] += delta[i]
void accumulate(Node& parent, std::span<const double> delta);

}  // namespace detail

// Replays the recorded operations of a graph in reverse topological order.
// Each forward graph supports exactly one backward pass; records are marked
// consumed and released as they are replayed.
class Tape {
 public:
  static void backward(const Tensor& loss);
};

// Populates dLoss/dLeaf for every requires_grad leaf reachable from `loss`.
void backward(const Tensor& loss);

}  // namespace xmamba
