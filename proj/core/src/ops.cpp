#include "genet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "genet/error.hpp"

namespace genet {

namespace {

// Returns the number of trailing elements of `big` that share one element of
// `small`, or 0 when `small` is not a prefix-then-singletons shape of `big`.
std::size_t broadcast_inner(const Shape& big, const Shape& small) {
  if (small.empty()) return shape_numel(big);
  if (small.size() != big.size()) return 0;
  std::size_t k = 0;
  while (k < big.size() && small[k] == big[k]) ++k;
  for (std::size_t i = k; i < big.size(); ++i) {
    if (small[i] != 1) return 0;
  }
  std::size_t inner = 1;
  for (std::size_t i = k; i < big.size(); ++i) inner *= big[i];
  return inner;
}

[[noreturn]] void broadcast_error(const Shape& a, const Shape& b) {
  fail(ErrorCode::kShape, "shape mismatch: " + shape_str(a) + " vs " + shape_str(b) +
                              " (only trailing singleton broadcasting is supported)");
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (broadcast_inner(a, b) != 0) return a;
  if (broadcast_inner(b, a) != 0) return b;
  broadcast_error(a, b);
}

template <typename T>
BasicTensor<T> elementwise(BinaryOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  // Element i of the output reads a[i / a_div] and b[i / b_div].
  const std::size_t a_div = a.numel() == n ? 1 : n / a.numel();
  const std::size_t b_div = b.numel() == n ? 1 : n / b.numel();
  const T* av = a.data().data();
  const T* bv = b.data().data();
  std::vector<T> out(n);
  T* ov = out.data();
  auto run = [&](auto f) {
    if (a_div == 1 && b_div == 1) {
      for (std::size_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i]);
    } else {
      for (std::size_t i = 0; i < n; ++i) ov[i] = f(av[i / a_div], bv[i / b_div]);
    }
  };
  switch (op) {
    case BinaryOp::kAdd: run([](T x, T y) { return x + y; }); break;
    case BinaryOp::kSub: run([](T x, T y) { return x - y; }); break;
    case BinaryOp::kMul: run([](T x, T y) { return x * y; }); break;
    case BinaryOp::kDiv: run([](T x, T y) { return x / y; }); break;
  }
  return make_result<T>(out_shape, std::move(out), {a, b},
                        [op, a_div, b_div](detail::Node<T>& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    const T* g = node.grad.data();
    const std::size_t count = node.grad.size();
    // Accumulates f(g_i, a_i, b_i) into dst[i / div].
    auto scatter = [&](std::vector<T>& dst, std::size_t div, auto f) {
      const T* x = pa.data.data();
      const T* y = pb.data.data();
      T* d = dst.data();
      if (a_div == 1 && b_div == 1) {
        for (std::size_t i = 0; i < count; ++i) d[i] += f(g[i], x[i], y[i]);
      } else {
        for (std::size_t i = 0; i < count; ++i) d[i / div] += f(g[i], x[i / a_div], y[i / b_div]);
      }
    };
    if (pa.requires_grad) {
      pa.ensure_grad();
      switch (op) {
        case BinaryOp::kAdd:
        case BinaryOp::kSub: scatter(pa.grad, a_div, [](T d, T, T) { return d; }); break;
        case BinaryOp::kMul: scatter(pa.grad, a_div, [](T d, T, T y) { return d * y; }); break;
        case BinaryOp::kDiv: scatter(pa.grad, a_div, [](T d, T, T y) { return d / y; }); break;
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      switch (op) {
        case BinaryOp::kAdd: scatter(pb.grad, b_div, [](T d, T, T) { return d; }); break;
        case BinaryOp::kSub: scatter(pb.grad, b_div, [](T d, T, T) { return -d; }); break;
        case BinaryOp::kMul: scatter(pb.grad, b_div, [](T d, T x, T) { return d * x; }); break;
        case BinaryOp::kDiv:
          scatter(pb.grad, b_div, [](T d, T x, T y) { return -d * x / (y * y); });
          break;
      }
    }
  });
}

template <typename T>
BasicTensor<T> elementwise(UnaryOp op, const BasicTensor<T>& x) {
  const T* xv = x.data().data();
  const std::size_t n = x.numel();
  std::vector<T> out(n);
  T* ov = out.data();
  auto run = [&](auto f) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = f(xv[i]);
  };
  switch (op) {
    case UnaryOp::kNeg: run([](T v) { return -v; }); break;
    case UnaryOp::kRelu: run([](T v) { return v > T(0) ? v : T(0); }); break;
    case UnaryOp::kExp: run([](T v) { return std::exp(v); }); break;
    case UnaryOp::kLog: run([](T v) { return std::log(v); }); break;
    case UnaryOp::kSquare: run([](T v) { return v * v; }); break;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [op](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    const std::size_t count = node.grad.size();
    const T* g = node.grad.data();
    const T* v = in.data.data();
    const T* y = node.data.data();
    T* d = in.grad.data();
    switch (op) {
      case UnaryOp::kNeg:
        for (std::size_t i = 0; i < count; ++i) d[i] -= g[i];
        break;
      case UnaryOp::kRelu:
        for (std::size_t i = 0; i < count; ++i) d[i] += v[i] > T(0) ? g[i] : T(0);
        break;
      case UnaryOp::kExp:
        for (std::size_t i = 0; i < count; ++i) d[i] += g[i] * y[i];
        break;
      case UnaryOp::kLog:
        for (std::size_t i = 0; i < count; ++i) d[i] += g[i] / v[i];
        break;
      case UnaryOp::kSquare:
        for (std::size_t i = 0; i < count; ++i) d[i] += T(2) * v[i] * g[i];
        break;
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T c) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * c;
  return make_result<T>(x.shape(), std::move(out), {x}, [c](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i) in.grad[i] += c * node.grad[i];
  });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail(ErrorCode::kShape,
         "matmul inner extent mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  using Map = Eigen::Map<RowMatrix<T>>;
  using CMap = Eigen::Map<const RowMatrix<T>>;
  Map(out.data(), m, n).noalias() = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);
  return make_result<T>({a.dim(0), b.dim(1)}, std::move(out), {a, b},
                        [m, k, n](detail::Node<T>& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    CMap dc(node.grad.data(), m, n);
    if (pa.requires_grad) {
      pa.ensure_grad();
      Map(pa.grad.data(), m, k).noalias() += dc * CMap(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      Map(pb.grad.data(), k, n).noalias() += CMap(pa.data.data(), m, k).transpose() * dc;
    }
  });
}

template <typename T>
BasicTensor<T> reduce(ReduceKind kind, const BasicTensor<T>& x, std::vector<std::size_t> axes) {
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.empty()) {
    for (std::size_t i = 0; i < rank; ++i) axes.push_back(i);
  }
  std::vector<bool> reduced(rank, false);
  for (std::size_t axis : axes) {
    if (axis >= rank || reduced[axis]) {
      fail(ErrorCode::kShape, "invalid reduction axis " + std::to_string(axis) + " for shape " +
                                  shape_str(in_shape));
    }
    reduced[axis] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    if (reduced[i]) {
      count *= in_shape[i];
    } else {
      out_shape.push_back(in_shape[i]);
    }
  }
  if (count == 0) fail(ErrorCode::kShape, "empty reduction extent");

  // Map each input element to its output slot via mixed-radix strides.
  std::vector<std::size_t> out_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    if (!reduced[i]) {
      out_stride[i] = stride;
      stride *= in_shape[i];
    }
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> target(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t t = 0;
    for (std::size_t i = 0; i < rank; ++i) t += idx[i] * out_stride[i];
    target[flat] = t;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < in_shape[i]) break;
      idx[i] = 0;
    }
  }
  const T factor = kind == ReduceKind::kMean ? T(1) / static_cast<T>(count) : T(1);
  std::vector<T> out(shape_numel(out_shape), T(0));
  const auto xv = x.data();
  for (std::size_t flat = 0; flat < n; ++flat) out[target[flat]] += xv[flat];
  for (auto& v : out) v *= factor;
  return make_result<T>(out_shape, std::move(out), {x},
                        [target = std::move(target), factor](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t flat = 0; flat < target.size(); ++flat) {
      in.grad[flat] += factor * node.grad[target[flat]];
    }
  });
}

template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, std::size_t axis, std::size_t begin,
                      std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || begin + length > s[axis]) {
    fail(ErrorCode::kShape, "narrow(" + std::to_string(axis) + ", " + std::to_string(begin) +
                                ", " + std::to_string(length) + ") out of range for " +
                                shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<T> out(outer * length * inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * extent + begin) * inner),
                length * inner, out.begin() + static_cast<std::ptrdiff_t>(o * length * inner));
  }
  return make_result<T>(out_shape, std::move(out), {x},
                        [outer, inner, extent, begin, length](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = node.grad.data() + o * length * inner;
      T* dst = in.grad.data() + (o * extent + begin) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) fail(ErrorCode::kShape, "stack of zero tensors");
  const Shape& part_shape = parts.front().shape();
  for (const auto& p : parts) {
    if (p.shape() != part_shape) {
      fail(ErrorCode::kShape, "stack shape mismatch: " + shape_str(part_shape) + " vs " +
                                  shape_str(p.shape()));
    }
  }
  const std::size_t each = parts.front().numel();
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), part_shape.begin(), part_shape.end());
  std::vector<T> out;
  out.reserve(each * parts.size());
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>(out_shape, std::move(out), parts, [each](detail::Node<T>& node) {
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      auto& in = *node.parents[k];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      for (std::size_t i = 0; i < each; ++i) in.grad[i] += node.grad[k * each + i];
    }
  });
}

template <typename T>
BasicTensor<T> select(const BasicTensor<T>& x, std::size_t index) {
  Shape rest(x.shape().begin() + 1, x.shape().end());
  if (rest.empty()) rest = {1};
  return narrow(x, 0, index, 1).reshape(rest);
}

#define GENET_INSTANTIATE_OPS(T)                                                            \
  template BasicTensor<T> elementwise(BinaryOp, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> elementwise(UnaryOp, const BasicTensor<T>&);                      \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                  \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> reduce(ReduceKind, const BasicTensor<T>&, std::vector<std::size_t>); \
  template BasicTensor<T> narrow(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t); \
  template BasicTensor<T> stack(const std::vector<BasicTensor<T>>&);                        \
  template BasicTensor<T> select(const BasicTensor<T>&, std::size_t);

GENET_INSTANTIATE_OPS(float)
GENET_INSTANTIATE_OPS(double)

}  // namespace genet
