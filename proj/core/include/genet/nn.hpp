#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "genet/rng.hpp"
#include "genet/tensor.hpp"

namespace genet {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Grouped 2-D convolution over NCHW input.
//
// weight is [C_out, C_in / groups, kH, kW]. Group k reads input channels
// [k*C_in/g, (k+1)*C_in/g) and writes output channels [k*C_out/g, (k+1)*C_out/g);
// there is no mixing between groups. Computed per image and group as
// im2col followed by a GEMM.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const Conv2dOptions& options);

// Output extent of one spatial axis; throws on underflow.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

// Batch normalization over the N, H, W axes of an NCHW tensor. In training
// mode batch statistics normalize the input and the running statistics are
// updated in place by exponential moving average (unbiased variance). In
// eval mode the running statistics are used and the op is a fixed affine map.
template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                            BasicTensor<T>& running_var, bool training, T momentum, T epsilon);

// [B, C, H, W] -> [B, C].
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

// x[B, F] * W[F, C] + b[C].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// Row-wise softmax of a [B, C] tensor.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// l_i = -log softmax(logits_i)[label_i], max-subtracted. Returns [B].
template <typename T>
BasicTensor<T> per_sample_cross_entropy(const BasicTensor<T>& logits,
                                        std::span<const std::int32_t> labels);

// H_i = -sum_c p_c log p_c with p = softmax(logits_i / temperature). The result
// carries no graph history: it is meant to be consumed as a constant weight.
template <typename T>
BasicTensor<T> entropy_of_logits(const BasicTensor<T>& logits, double temperature);

template <typename T>
struct Conv2dParams {
  BasicTensor<T> weight;
  std::optional<BasicTensor<T>> bias;
  Conv2dOptions options;

  std::size_t in_channels() const { return weight.dim(1) * options.groups; }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t param_count() const {
    return weight.numel() + (bias ? bias->numel() : 0);
  }
  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    return conv2d(x, weight, bias, options);
  }
};

// He-normal initialised conv weights, std = sqrt(2 / fan_in).
template <typename T>
Conv2dParams<T> make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          const Conv2dOptions& options, Rng& rng, bool with_bias = false);

template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  explicit BatchNormParams(std::size_t channels = 1);
  BasicTensor<T> operator()(const BasicTensor<T>& x, bool training) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, training, momentum, epsilon);
  }
};

}  // namespace genet
