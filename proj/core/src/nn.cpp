#include "genet/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "genet/error.hpp"

namespace genet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<RowMatrix<T>>;
template <typename T>
using CMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t batch, in_c, height, width;
  std::size_t out_c, kh, kw;
  std::size_t out_h, out_w;
  std::size_t stride, padding, groups;

  std::size_t in_c_group() const { return in_c / groups; }
  std::size_t out_c_group() const { return out_c / groups; }
  std::size_t patch() const { return in_c_group() * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox*stride + k - pad is in range.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t k, const ConvGeometry& g,
                                                       std::size_t in_extent, std::size_t out_extent) {
  std::size_t lo = 0;
  if (g.padding > k) lo = (g.padding - k + g.stride - 1) / g.stride;
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in_extent) - 1 +
                              static_cast<std::ptrdiff_t>(g.padding) - static_cast<std::ptrdiff_t>(k);
  std::size_t hi = last < 0 ? 0 : static_cast<std::size_t>(last) / g.stride + 1;
  hi = std::min(hi, out_extent);
  return {std::min(lo, hi), hi};
}

// Unfolds one group of one image ([Cg, H, W]) into cols [Cg*kh*kw, out_h*out_w]
// whose rows are `ld` apart.
template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* cols, std::size_t ld) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_c_group(); ++c) {
    const T* plane = src + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      const auto [y_lo, y_hi] = valid_range(ki, g, g.height, g.out_h);
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const auto [x_lo, x_hi] = valid_range(kj, g, g.width, g.out_w);
        T* dst = cols + row * ld;
        std::fill(dst, dst + y_lo * g.out_w, T(0));
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          T* line = dst + oy * g.out_w;
          const T* in_row = plane + (oy * g.stride + ki - g.padding) * g.width;
          std::fill(line, line + x_lo, T(0));
          if (x_hi == x_lo) {
          } else if (g.stride == 1) {
            std::copy(in_row + x_lo + kj - g.padding, in_row + x_hi + kj - g.padding, line + x_lo);
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) line[ox] = in_row[ox * g.stride + kj - g.padding];
          }
          std::fill(line + x_hi, line + g.out_w, T(0));
        }
        std::fill(dst + y_hi * g.out_w, dst + g.pixels(), T(0));
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dst, std::size_t ld) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_c_group(); ++c) {
    T* plane = dst + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      const auto [y_lo, y_hi] = valid_range(ki, g, g.height, g.out_h);
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const auto [x_lo, x_hi] = valid_range(kj, g, g.width, g.out_w);
        const T* src = cols + row * ld;
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          T* out_row = plane + (oy * g.stride + ki - g.padding) * g.width;
          const T* line = src + oy * g.out_w;
          if (g.stride == 1) {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) out_row[ox + kj - g.padding] += line[ox];
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) out_row[ox * g.stride + kj - g.padding] += line[ox];
          }
        }
      }
    }
  }
}

// Fixed-lane reductions: the summation order depends only on n, never on the
// buffer's alignment, so results are reproducible run to run.
constexpr std::size_t kLanes = 16;

template <typename T, typename F>
double lane_reduce(std::size_t n, F term) {
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += term(i + j);
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += term(i);
  double total = 0.0;
  for (T a : acc) total += static_cast<double>(a);
  return total;
}

template <typename T>
double lane_sum(const T* x, std::size_t n) {
  return lane_reduce<T>(n, [x](std::size_t i) { return x[i]; });
}

// Images are processed in chunks so each group's GEMM spans several images:
// cols is [K, nb*P] and the output block [Cg, nb*P].
constexpr std::size_t kTargetGemmColumns = 4096;

std::size_t chunk_images(const ConvGeometry& g) {
  return std::clamp<std::size_t>(kTargetGemmColumns / std::max<std::size_t>(g.pixels(), 1), 1,
                                 g.batch);
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* xv, const T* wv, T* out) {
  const std::size_t P = g.pixels();
  const auto K = static_cast<Eigen::Index>(g.patch());
  const auto Cg = static_cast<Eigen::Index>(g.out_c_group());
  const std::size_t in_group_size = g.in_c_group() * g.height * g.width;
  const std::size_t out_group_size = g.out_c_group() * P;
  const std::size_t nb_max = chunk_images(g);
  std::vector<T> cols(g.patch() * nb_max * P);
  std::vector<T> block(g.out_c_group() * nb_max * P);
  for (std::size_t b0 = 0; b0 < g.batch; b0 += nb_max) {
    const std::size_t nb = std::min(nb_max, g.batch - b0);
    const std::size_t ld = nb * P;
    for (std::size_t k = 0; k < g.groups; ++k) {
      for (std::size_t j = 0; j < nb; ++j) {
        im2col(xv + ((b0 + j) * g.groups + k) * in_group_size, g, cols.data() + j * P, ld);
      }
      Map<T>(block.data(), Cg, static_cast<Eigen::Index>(ld)).noalias() =
          CMap<T>(wv + k * g.out_c_group() * g.patch(), Cg, K) *
          CMap<T>(cols.data(), K, static_cast<Eigen::Index>(ld));
      for (std::size_t j = 0; j < nb; ++j) {
        T* dst = out + ((b0 + j) * g.groups + k) * out_group_size;
        for (std::size_t c = 0; c < g.out_c_group(); ++c) {
          std::copy_n(block.data() + c * ld + j * P, P, dst + c * P);
        }
      }
    }
  }
}

// Accumulates into gx / gw when they are non-null.
template <typename T>
void conv_backward(const ConvGeometry& g, const T* xv, const T* wv, const T* gy, T* gx, T* gw) {
  const std::size_t P = g.pixels();
  const auto K = static_cast<Eigen::Index>(g.patch());
  const auto Cg = static_cast<Eigen::Index>(g.out_c_group());
  const std::size_t in_group_size = g.in_c_group() * g.height * g.width;
  const std::size_t out_group_size = g.out_c_group() * P;
  const std::size_t nb_max = chunk_images(g);
  std::vector<T> cols(g.patch() * nb_max * P);
  std::vector<T> block(g.out_c_group() * nb_max * P);
  for (std::size_t b0 = 0; b0 < g.batch; b0 += nb_max) {
    const std::size_t nb = std::min(nb_max, g.batch - b0);
    const std::size_t ld = nb * P;
    const auto N = static_cast<Eigen::Index>(ld);
    for (std::size_t k = 0; k < g.groups; ++k) {
      for (std::size_t j = 0; j < nb; ++j) {
        const T* src = gy + ((b0 + j) * g.groups + k) * out_group_size;
        for (std::size_t c = 0; c < g.out_c_group(); ++c) {
          std::copy_n(src + c * P, P, block.data() + c * ld + j * P);
        }
      }
      CMap<T> dout(block.data(), Cg, N);
      if (gw) {
        for (std::size_t j = 0; j < nb; ++j) {
          im2col(xv + ((b0 + j) * g.groups + k) * in_group_size, g, cols.data() + j * P, ld);
        }
        Map<T>(gw + k * g.out_c_group() * g.patch(), Cg, K).noalias() +=
            dout * CMap<T>(cols.data(), K, N).transpose();
      }
      if (gx) {
        Map<T>(cols.data(), K, N).noalias() =
            CMap<T>(wv + k * g.out_c_group() * g.patch(), Cg, K).transpose() * dout;
        for (std::size_t j = 0; j < nb; ++j) {
          col2im_add(cols.data() + j * P, g, gx + ((b0 + j) * g.groups + k) * in_group_size, ld);
        }
      }
    }
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kShape, what);
}

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) fail(ErrorCode::kShape, "convolution stride must be positive");
  if (input + 2 * padding < kernel) {
    fail(ErrorCode::kShape, "spatial underflow: extent " + std::to_string(input) +
                                " with padding " + std::to_string(padding) +
                                " is smaller than kernel " + std::to_string(kernel));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const Conv2dOptions& options) {
  require(x.rank() == 4, "conv2d input must be [B,C,H,W], got " + shape_str(x.shape()));
  require(weight.rank() == 4, "conv2d weight must be [Cout,Cin/g,kH,kW], got " +
                                  shape_str(weight.shape()));
  const std::size_t groups = options.groups;
  require(groups > 0, "conv2d groups must be positive");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_c = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_c = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = options.stride;
  g.padding = options.padding;
  g.groups = groups;
  require(g.in_c % groups == 0 && g.out_c % groups == 0,
          "conv2d channels not divisible by groups=" + std::to_string(groups) + ": C_in=" +
              std::to_string(g.in_c) + ", C_out=" + std::to_string(g.out_c));
  require(weight.dim(1) == g.in_c / groups,
          "conv2d weight " + shape_str(weight.shape()) + " does not match input " +
              shape_str(x.shape()) + " with groups=" + std::to_string(groups));
  if (bias) {
    require(bias->rank() == 1 && bias->dim(0) == g.out_c,
            "conv2d bias must be [" + std::to_string(g.out_c) + "]");
  }
  g.out_h = conv_output_extent(g.height, g.kh, g.stride, g.padding);
  g.out_w = conv_output_extent(g.width, g.kw, g.stride, g.padding);

  std::vector<T> out(g.batch * g.out_c * g.pixels());
  const T* xv = x.data().data();
  const T* wv = weight.data().data();
  conv_forward(g, xv, wv, out.data());
  if (bias) {
    const T* bv = bias->data().data();
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t c = 0; c < g.out_c; ++c) {
        T* plane = out.data() + (b * g.out_c + c) * g.pixels();
        for (std::size_t p = 0; p < g.pixels(); ++p) plane[p] += bv[c];
      }
    }
  }

  std::vector<BasicTensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>({g.batch, g.out_c, g.out_h, g.out_w}, std::move(out), std::move(inputs),
                        [g](detail::Node<T>& node) {
    auto& px = *node.parents[0];
    auto& pw = *node.parents[1];
    if (node.parents.size() > 2 && node.parents[2]->requires_grad) {
      auto& pb = *node.parents[2];
      pb.ensure_grad();
      for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t c = 0; c < g.out_c; ++c) {
          pb.grad[c] += static_cast<T>(lane_sum(node.grad.data() + (b * g.out_c + c) * g.pixels(), g.pixels()));
        }
      }
    }
    if (!px.requires_grad && !pw.requires_grad) return;
    if (px.requires_grad) px.ensure_grad();
    if (pw.requires_grad) pw.ensure_grad();
    conv_backward(g, px.data.data(), pw.data.data(), node.grad.data(),
                  px.requires_grad ? px.grad.data() : nullptr,
                  pw.requires_grad ? pw.grad.data() : nullptr);
  });
}

template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                            BasicTensor<T>& running_var, bool training, T momentum, T epsilon) {
  require(x.rank() == 4, "batch_norm2d input must be [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::array<const BasicTensor<T>*, 4> bn_tensors{&gamma, &beta, &running_mean, &running_var};
  for (const BasicTensor<T>* t : bn_tensors) {
    require(t->rank() == 1 && t->dim(0) == channels,
            "batch_norm2d parameter " + shape_str(t->shape()) + " does not match channels " +
                std::to_string(channels));
  }
  const std::size_t count = batch * hw;
  const T* xv = x.data().data();
  std::vector<T> mean(channels), inv_std(channels);
  if (training) {
    require(count > 1, "batch_norm2d training needs more than one value per channel");
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      // Plane sums are vectorised; planes accumulate in double.
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += lane_sum(xv + (b * channels + c) * hw, hw);
      const T mu = static_cast<T>(s / static_cast<double>(count));
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* plane = xv + (b * channels + c) * hw;
        ss += lane_reduce<T>(hw, [plane, mu](std::size_t i) {
          const T d = plane[i] - mu;
          return d * d;
        });
      }
      const T var = static_cast<T>(ss / static_cast<double>(count));
      mean[c] = mu;
      inv_std[c] = T(1) / std::sqrt(var + epsilon);
      rm[c] = (T(1) - momentum) * rm[c] + momentum * mu;
      rv[c] = (T(1) - momentum) * rv[c] +
              momentum * var * static_cast<T>(count) / static_cast<T>(count - 1);
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = rm[c];
      inv_std[c] = T(1) / std::sqrt(rv[c] + epsilon);
    }
  }

  std::vector<T> xhat(x.numel()), out(x.numel());
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const T h = (xv[off + p] - mean[c]) * inv_std[c];
        xhat[off + p] = h;
        out[off + p] = gv[c] * h + bv[c];
      }
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels,
                         hw, training](detail::Node<T>& node) {
    auto& px = *node.parents[0];
    auto& pg = *node.parents[1];
    auto& pb = *node.parents[2];
    const auto& dy = node.grad;
    const std::size_t count = batch * hw;
    std::vector<T> sum_dy(channels, T(0)), sum_dy_xhat(channels, T(0));
    for (std::size_t c = 0; c < channels; ++c) {
      double a = 0.0, b2 = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * channels + c) * hw;
        const T* d = dy.data() + off;
        const T* h = xhat.data() + off;
        a += lane_sum(d, hw);
        b2 += lane_reduce<T>(hw, [d, h](std::size_t i) { return d[i] * h[i]; });
      }
      sum_dy[c] = static_cast<T>(a);
      sum_dy_xhat[c] = static_cast<T>(b2);
    }
    if (pg.requires_grad) {
      pg.ensure_grad();
      for (std::size_t c = 0; c < channels; ++c) pg.grad[c] += sum_dy_xhat[c];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t c = 0; c < channels; ++c) pb.grad[c] += sum_dy[c];
    }
    if (!px.requires_grad) return;
    px.ensure_grad();
    const T inv_count = T(1) / static_cast<T>(count);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t off = (b * channels + c) * hw;
        const T scale = pg.data[c] * inv_std[c];
        T* gx = px.grad.data() + off;
        const T* d = dy.data() + off;
        const T* h = xhat.data() + off;
        if (training) {
          const T shift = inv_count * sum_dy[c];
          const T slope = inv_count * sum_dy_xhat[c];
          for (std::size_t p = 0; p < hw; ++p) gx[p] += scale * (d[p] - shift - h[p] * slope);
        } else {
          for (std::size_t p = 0; p < hw; ++p) gx[p] += scale * d[p];
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require(x.rank() == 4, "global_avg_pool input must be [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(hw);
  std::vector<T> out(bc);
  const T* xv = x.data().data();
  for (std::size_t i = 0; i < bc; ++i) {
    T s = T(0);
    for (std::size_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    out[i] = s * inv;
  }
  return make_result<T>({x.dim(0), x.dim(1)}, std::move(out), {x},
                        [bc, hw, inv](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < bc; ++i) {
      const T g = node.grad[i] * inv;
      for (std::size_t p = 0; p < hw; ++p) in.grad[i * hw + p] += g;
    }
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require(x.rank() == 2 && weight.rank() == 2 && x.dim(1) == weight.dim(0),
          "linear shape mismatch: x " + shape_str(x.shape()) + ", W " +
              shape_str(weight.shape()));
  require(bias.rank() == 1 && bias.dim(0) == weight.dim(1),
          "linear bias " + shape_str(bias.shape()) + " does not match W " +
              shape_str(weight.shape()));
  const auto B = static_cast<Eigen::Index>(x.dim(0));
  const auto F = static_cast<Eigen::Index>(x.dim(1));
  const auto C = static_cast<Eigen::Index>(weight.dim(1));
  std::vector<T> out(static_cast<std::size_t>(B * C));
  Map<T> y(out.data(), B, C);
  y.noalias() = CMap<T>(x.data().data(), B, F) * CMap<T>(weight.data().data(), F, C);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), C);
  return make_result<T>({x.dim(0), weight.dim(1)}, std::move(out), {x, weight, bias},
                        [B, F, C](detail::Node<T>& node) {
    auto& px = *node.parents[0];
    auto& pw = *node.parents[1];
    auto& pb = *node.parents[2];
    CMap<T> dy(node.grad.data(), B, C);
    if (px.requires_grad) {
      px.ensure_grad();
      Map<T>(px.grad.data(), B, F).noalias() += dy * CMap<T>(pw.data.data(), F, C).transpose();
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      Map<T>(pw.grad.data(), F, C).noalias() += CMap<T>(px.data.data(), B, F).transpose() * dy;
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(pb.grad.data(), C) += dy.colwise().sum();
    }
  });
}

namespace {

// Row-wise max-subtracted softmax of `scale * logits`; also returns log-sum-exp.
template <typename T>
void softmax_rows(const T* logits, std::size_t rows, std::size_t cols, double scale, T* probs,
                  T* lse) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits + r * cols;
    T* p = probs + r * cols;
    T m = z[0] * static_cast<T>(scale);
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, z[c] * static_cast<T>(scale));
    T s = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(z[c] * static_cast<T>(scale) - m);
      s += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= s;
    if (lse) lse[r] = m + std::log(s);
  }
}

}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require(logits.rank() == 2, "softmax expects [B,C], got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<T> probs(logits.numel());
  softmax_rows(logits.data().data(), rows, cols, 1.0, probs.data(), static_cast<T*>(nullptr));
  return make_result<T>(logits.shape(), std::move(probs), {logits},
                        [rows, cols](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* p = node.data.data() + r * cols;
      const T* g = node.grad.data() + r * cols;
      T dot = T(0);
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * p[c];
      for (std::size_t c = 0; c < cols; ++c) in.grad[r * cols + c] += p[c] * (g[c] - dot);
    }
  });
}

template <typename T>
BasicTensor<T> per_sample_cross_entropy(const BasicTensor<T>& logits,
                                        std::span<const std::int32_t> labels) {
  require(logits.rank() == 2, "cross entropy expects [B,C] logits, got " +
                                  shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  require(labels.size() == rows, "cross entropy: " + std::to_string(labels.size()) +
                                     " labels for " + std::to_string(rows) + " rows");
  for (std::int32_t y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= cols) {
      fail(ErrorCode::kArgument, "label " + std::to_string(y) + " out of range [0," +
                                     std::to_string(cols) + ")");
    }
  }
  std::vector<T> probs(logits.numel()), lse(rows), loss(rows);
  const T* z = logits.data().data();
  softmax_rows(z, rows, cols, 1.0, probs.data(), lse.data());
  std::vector<std::int32_t> kept(labels.begin(), labels.end());
  for (std::size_t r = 0; r < rows; ++r) {
    loss[r] = lse[r] - z[r * cols + static_cast<std::size_t>(kept[r])];
  }
  return make_result<T>({rows}, std::move(loss), {logits},
                        [probs = std::move(probs), kept = std::move(kept), rows,
                         cols](detail::Node<T>& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = node.grad[r];
      for (std::size_t c = 0; c < cols; ++c) in.grad[r * cols + c] += g * probs[r * cols + c];
      in.grad[r * cols + static_cast<std::size_t>(kept[r])] -= g;
    }
  });
}

template <typename T>
BasicTensor<T> entropy_of_logits(const BasicTensor<T>& logits, double temperature) {
  if (!(temperature > 0.0)) {
    fail(ErrorCode::kArgument, "temperature must be positive, got " + std::to_string(temperature));
  }
  require(logits.rank() == 2, "entropy expects [B,C] logits, got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<T> probs(logits.numel()), lse(rows), out(rows);
  const T* z = logits.data().data();
  const double inv_t = 1.0 / temperature;
  softmax_rows(z, rows, cols, inv_t, probs.data(), lse.data());
  const T upper = static_cast<T>(std::log(static_cast<double>(cols)));
  for (std::size_t r = 0; r < rows; ++r) {
    T h = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      const T p = probs[r * cols + c];
      if (p > T(0)) h -= p * (z[r * cols + c] * static_cast<T>(inv_t) - lse[r]);
    }
    out[r] = std::clamp(h, T(0), upper);
  }
  return BasicTensor<T>({rows}, std::move(out));
}

template <typename T>
Conv2dParams<T> make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          const Conv2dOptions& options, Rng& rng, bool with_bias) {
  require(options.groups > 0 && in_channels % options.groups == 0 &&
              out_channels % options.groups == 0,
          "conv channels " + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
              " not divisible by groups=" + std::to_string(options.groups));
  const std::size_t fan_in = in_channels / options.groups * kernel * kernel;
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> w(out_channels * fan_in);
  for (auto& v : w) v = static_cast<T>(rng.normal(0.0, std_dev));
  Conv2dParams<T> p{
      BasicTensor<T>({out_channels, in_channels / options.groups, kernel, kernel}, std::move(w),
                     true),
      std::nullopt, options};
  if (with_bias) p.bias = BasicTensor<T>::zeros({out_channels}, true);
  return p;
}

template <typename T>
BatchNormParams<T>::BatchNormParams(std::size_t channels)
    : gamma(BasicTensor<T>::ones({channels}, true)),
      beta(BasicTensor<T>::zeros({channels}, true)),
      running_mean(BasicTensor<T>::zeros({channels})),
      running_var(BasicTensor<T>::ones({channels})) {}

#define GENET_INSTANTIATE_NN(T)                                                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                 const std::optional<BasicTensor<T>>&, const Conv2dOptions&); \
  template BasicTensor<T> batch_norm2d(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                       const BasicTensor<T>&, BasicTensor<T>&,                \
                                       BasicTensor<T>&, bool, T, T);                          \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                             \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                 const BasicTensor<T>&);                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                     \
  template BasicTensor<T> per_sample_cross_entropy(const BasicTensor<T>&,                     \
                                                   std::span<const std::int32_t>);            \
  template BasicTensor<T> entropy_of_logits(const BasicTensor<T>&, double);                   \
  template Conv2dParams<T> make_conv(std::size_t, std::size_t, std::size_t,                   \
                                     const Conv2dOptions&, Rng&, bool);                       \
  template struct BatchNormParams<T>;

GENET_INSTANTIATE_NN(float)
GENET_INSTANTIATE_NN(double)

}  // namespace genet
