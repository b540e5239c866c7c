#include "fairvit/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace fairvit {

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

namespace detail {
namespace {
thread_local bool g_grad_enabled = true;
}
bool grad_enabled() { return g_grad_enabled; }
}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape dims, std::vector<T> data, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto d : dims) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(dims));
  }
  if (shape_numel(dims) != data.size()) {
    throw ShapeError("tensor " + shape_str(dims) + " needs " + std::to_string(shape_numel(dims)) +
                     " values, got " + std::to_string(data.size()));
  }
  impl_->dims = std::move(dims);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape dims, bool requires_grad) {
  return full(std::move(dims), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape dims, T value, bool requires_grad) {
  std::vector<T> data(shape_numel(dims), value);
  return Tensor(std::move(dims), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw ShapeError("rows() on rank-" + std::to_string(rank()) + " tensor");
  return impl_->dims[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() != 2) throw ShapeError("cols() on rank-" + std::to_string(rank()) + " tensor");
  return impl_->dims[1];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor " + shape_str(dims()));
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->dims, impl_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::record(Shape dims, std::vector<T> data, const std::vector<Tensor>& inputs,
                            const char* op, std::function<void(const Impl& out)> backward_fn) {
  Tensor out(std::move(dims), std::move(data), false);
  if (!detail::grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<detail::Node<T>>();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward_fn);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

template <typename T>
void backward(const Tensor<T>& root) {
  using Impl = detail::TensorImpl<T>;
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward root must be a scalar tensor");
  }
  if (!root.requires_grad()) throw ContractError("backward root is not on the tape");

  // Iterative post-order DFS gives a topological order; walk it backwards.
  std::vector<Impl*> order;
  std::unordered_set<const Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    const auto* node = cur->node.get();
    if (node && next < node->inputs.size()) {
      Impl* child = node->inputs[next++].get();
      if (child->requires_grad && child->node && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(cur);
    stack.pop_back();
  }

  root.impl()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* cur = *it;
    if (cur->grad.empty() || !cur->node) continue;
    for (const auto& in : cur->node->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    cur->node->backward(*cur);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace fairvit
