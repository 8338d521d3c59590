#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace genet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the per-forward compute graph. Leaves have no backward
// function; interior nodes hold their inputs until backward() releases them.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

// Dense row-major n-dimensional array with optional gradient.
//
// A BasicTensor is a shared handle: copies alias the same buffer. Operations
// never mutate their inputs; only optimizers and initializers write through
// mutable_data() between steps.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor();
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor ones(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);
  static BasicTensor from(std::initializer_list<T> values, Shape shape = {});

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  std::vector<T> to_vector() const { return node_->data; }
  T item() const;
  T at(std::size_t flat_index) const { return node_->data.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  // New leaf holding a copy of the values; no graph history.
  BasicTensor detach() const;
  BasicTensor reshape(Shape shape) const;

  bool is_leaf() const { return !node_->backward; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Graph recording switch. Operations record their adjoints only while grad
// mode is enabled on the calling thread and some input requires grad.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds the output node of an operation. When recording is active the node
// keeps `inputs` and `backward`; otherwise both are dropped.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(detail::Node<T>&)> backward);

// Reverse-mode sweep from a scalar root. Populates grad of every reachable
// node that requires grad, then discards the graph. Returns the number of
// interior nodes visited.
template <typename T>
std::size_t backward(const BasicTensor<T>& root);

// True when GENET_DETERMINISTIC=1 is set in the environment.
bool deterministic_mode();

// Keeps freed tensor buffers in the heap rather than handing them back to the
// OS after every op (glibc only; a no-op elsewhere). Call once at startup.
void tune_allocator();

}  // namespace genet
