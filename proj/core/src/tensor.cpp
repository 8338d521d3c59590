#include "genet/tensor.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "genet/error.hpp"

namespace genet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
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

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape, std::size_t size) {
  for (std::size_t extent : shape) {
    if (extent == 0) fail(ErrorCode::kShape, "zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != size) {
    fail(ErrorCode::kShape, "shape " + shape_str(shape) + " does not match " +
                                std::to_string(size) + " elements");
  }
}

template <typename T>
bool all_finite(const std::vector<T>& values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool deterministic_mode() {
  const char* v = std::getenv("GENET_DETERMINISTIC");
  return v != nullptr && std::strcmp(v, "1") == 0;
}

template <typename T>
BasicTensor<T>::BasicTensor() : BasicTensor(Shape{}, std::vector<T>{T(0)}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  check_shape(shape, data.size());
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(1), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(std::initializer_list<T> values, Shape shape) {
  if (shape.empty()) shape = {values.size()};
  return BasicTensor(std::move(shape), std::vector<T>(values));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    fail(ErrorCode::kShape, "item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(node_->shape, node_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshape(Shape shape) const {
  check_shape(shape, numel());
  return make_result<T>(std::move(shape), node_->data, {*this}, [](detail::Node<T>& out) {
    auto& in = *out.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i) in.grad[i] += out.grad[i];
  });
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(detail::Node<T>&)> backward) {
#ifndef NDEBUG
  if (!all_finite(data)) {
    const bool inputs_finite = std::all_of(inputs.begin(), inputs.end(), [](const auto& t) {
      return all_finite(t.node()->data);
    });
    if (inputs_finite) {
      fail(ErrorCode::kShape, "non-finite output " + shape_str(shape) + " from finite inputs");
    }
  }
#endif
  BasicTensor<T> out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const auto& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& t : inputs) node.parents.push_back(t.node());
  node.backward = std::move(backward);
  return out;
}

template <typename T>
std::size_t backward(const BasicTensor<T>& root) {
  if (root.numel() != 1) {
    fail(ErrorCode::kShape, "backward() needs a scalar root, got " + shape_str(root.shape()));
  }
  using Node = detail::Node<T>;
  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* start = root.node().get();
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->backward && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  start->ensure_grad();
  start->grad[0] += T(1);
  std::size_t visited = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    node->ensure_grad();
    node->backward(*node);
    ++visited;
  }
  for (Node* node : order) {
    node->backward = nullptr;
    node->parents.clear();
  }
  return visited;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> make_result(Shape, std::vector<float>, std::vector<BasicTensor<float>>,
                                        std::function<void(detail::Node<float>&)>);
template BasicTensor<double> make_result(Shape, std::vector<double>,
                                         std::vector<BasicTensor<double>>,
                                         std::function<void(detail::Node<double>&)>);
template std::size_t backward(const BasicTensor<float>&);
template std::size_t backward(const BasicTensor<double>&);

}  // namespace genet
