#pragma once

#include <cstddef>
#include <vector>

#include "genet/tensor.hpp"

namespace genet {

enum class BinaryOp { kAdd, kSub, kMul, kDiv };
enum class UnaryOp { kNeg, kRelu, kExp, kLog, kSquare };
enum class ReduceKind { kSum, kMean };

// Broadcasting is limited to trailing singleton extents: with equal ranks, one
// operand may have shape prefix(k) + [1, ..., 1] of the other's shape.
// Anything else is a shape error naming both shapes.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T>
BasicTensor<T> elementwise(BinaryOp op, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> elementwise(UnaryOp op, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(BinaryOp::kAdd, a, b);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(BinaryOp::kSub, a, b);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(BinaryOp::kMul, a, b);
}
template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(BinaryOp::kDiv, a, b);
}
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return elementwise(UnaryOp::kRelu, x);
}

// x * c for a constant c (no gradient to c).
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T c);

// [M,K] x [K,N] -> [M,N].
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Reduces over `axes` (empty = all axes). Reduced axes are dropped.
template <typename T>
BasicTensor<T> reduce(ReduceKind kind, const BasicTensor<T>& x, std::vector<std::size_t> axes = {});

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  return reduce(ReduceKind::kSum, x);
}
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return reduce(ReduceKind::kMean, x);
}

// Slice [begin, begin + length) along `axis`.
template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, std::size_t axis, std::size_t begin,
                      std::size_t length);

// Stacks equally shaped tensors along a new leading axis.
template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts);

// Index along the leading axis, dropping it.
template <typename T>
BasicTensor<T> select(const BasicTensor<T>& x, std::size_t index);

}  // namespace genet
