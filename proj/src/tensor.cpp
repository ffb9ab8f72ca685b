#include "xmamba/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace xmamba {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

namespace {
std::atomic<std::uint64_t> g_seq{1};
}

std::uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(what) + ": non-finite value produced");
    }
  }
}

Tensor make_op(Shape shape, std::vector<double> data, const char* op_name,
               std::vector<Tensor> parents, std::function<void(Node&)> grad_fn) {
  if (numel_of(shape) != data.size()) {
    throw ShapeMismatchError(std::string(op_name) + ": shape " + shape_str(shape) +
                             " does not match buffer of " +
                             std::to_string(data.size()));
  }
  check_finite(data, op_name);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = next_seq();
  bool needs_grad = false;
  for (const Tensor& p : parents) {
    if (p.requires_grad()) needs_grad = true;
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->grad_fn = std::move(grad_fn);
  }
  return Tensor(std::move(node));
}

void accumulate(Node& parent, std::span<const double> delta) {
  parent.ensure_grad();
  double* g = parent.grad.data();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return from_data(std::move(shape), std::vector<double>(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel_of(shape) != data.size()) {
    throw ShapeMismatchError("Tensor: shape " + shape_str(shape) +
                             " does not match buffer of " + std::to_string(data.size()));
  }
  detail::check_finite(data, "Tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  node->seq = detail::next_seq();
  return Tensor(std::move(node));
}

double Tensor::value() const {
  if (numel() != 1) {
    throw NotScalarError("Tensor::value: tensor has " + std::to_string(numel()) +
                         " elements");
  }
  return node_->data[0];
}

Tensor Tensor::detached(bool requires_grad) const {
  return from_data(node_->shape, node_->data, requires_grad);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw TapeConsumedError("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw NotScalarError("backward: loss must be scalar, got shape " +
                         shape_str(loss.shape()));
  }
  auto root = loss.node();
  if (!root->requires_grad) {
    throw TapeConsumedError("backward: loss is not recorded on any tape");
  }
  if (root->consumed) {
    throw TapeConsumedError("backward: tape already consumed");
  }

  // Collect the reachable grad-requiring subgraph; seq order is a valid
  // topological order because parents are always created before children.
  std::vector<detail::Node*> order;
  std::vector<std::shared_ptr<detail::Node>> keep_alive;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    if (!node->is_leaf && node->consumed) {
      throw TapeConsumedError("backward: graph shares an already-consumed record");
    }
    order.push_back(node.get());
    for (const auto& p : node->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    keep_alive.push_back(std::move(node));
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (detail::Node* node : order) {
    if (node->is_leaf) continue;
    node->ensure_grad();
    if (node->grad_fn) node->grad_fn(*node);
    node->consumed = true;
    // Release the record: frees intermediate buffers and enforces one pass.
    node->grad_fn = nullptr;
    node->parents.clear();
    if (node != root.get()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) { Tape::backward(loss); }

}  // namespace xmamba
