#pragma once

// Reference implementations written independently of core/: plain loops in
// double precision, no im2col, no autodiff.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "genet/rng.hpp"
#include "genet/tensor.hpp"

namespace oracle {

// Direct 7-loop convolution: out[n][o][y][x] = sum over the group's input
// channels and kernel window, zero padding outside the image.
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t batch,
                                  std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& weight, std::size_t cout,
                                  std::size_t k, std::size_t stride, std::size_t pad,
                                  std::size_t groups) {
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (w + 2 * pad - k) / stride + 1;
  const std::size_t cin_g = cin / groups;
  const std::size_t cout_g = cout / groups;
  std::vector<double> out(batch * cout * oh * ow, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < cout; ++o) {
      const std::size_t g = o / cout_g;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = 0.0;
          for (std::size_t c = 0; c < cin_g; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                const std::size_t ic = g * cin_g + c;
                acc += in[((n * cin + ic) * h + iy) * w + ix] *
                       weight[((o * cin_g + c) * k + ky) * k + kx];
              }
          out[((n * cout + o) * oh + y) * ow + x] = acc;
        }
    }
  return out;
}

// The same grouped convolution as `groups` independent standard convolutions
// on channel slices, concatenated along the output channels.
inline std::vector<double> conv2d_per_group(const std::vector<double>& in, std::size_t batch,
                                            std::size_t cin, std::size_t h, std::size_t w,
                                            const std::vector<double>& weight, std::size_t cout,
                                            std::size_t k, std::size_t stride, std::size_t pad,
                                            std::size_t groups) {
  const std::size_t cin_g = cin / groups, cout_g = cout / groups;
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(batch * cout * oh * ow);
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<double> slice(batch * cin_g * h * w);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < cin_g; ++c)
        for (std::size_t i = 0; i < h * w; ++i)
          slice[(n * cin_g + c) * h * w + i] = in[(n * cin + g * cin_g + c) * h * w + i];
    const std::size_t wsize = cout_g * cin_g * k * k;
    std::vector<double> wslice(weight.begin() + static_cast<long>(g * wsize),
                               weight.begin() + static_cast<long>((g + 1) * wsize));
    const auto part = conv2d(slice, batch, cin_g, h, w, wslice, cout_g, k, stride, pad, 1);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t o = 0; o < cout_g; ++o)
        for (std::size_t i = 0; i < oh * ow; ++i)
          out[(n * cout + g * cout_g + o) * oh * ow + i] = part[(n * cout_g + o) * oh * ow + i];
  }
  return out;
}

inline double log_sum_exp(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double cross_entropy(const std::vector<double>& logits, std::size_t label) {
  return log_sum_exp(logits) - logits[label];
}

inline double entropy(const std::vector<double>& logits, double temperature) {
  std::vector<double> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = logits[i] / temperature;
  const double lse = log_sum_exp(z);
  double h = 0.0;
  for (double v : z) {
    const double p = std::exp(v - lse);
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

// Standard normal CDF by Simpson integration of the density from -10.
inline double normal_cdf(double x) {
  const int steps = 20000;
  const double a = -10.0, hstep = (x - a) / steps;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double s = pdf(a) + pdf(x);
  for (int i = 1; i < steps; ++i) s += pdf(a + i * hstep) * (i % 2 ? 4.0 : 2.0);
  return s * hstep / 3.0;
}

template <typename T>
genet::BasicTensor<T> random_tensor(genet::Shape shape, genet::Rng& rng, double scale = 1.0,
                                    bool requires_grad = false) {
  std::vector<T> v(genet::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
  return genet::BasicTensor<T>(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

// Hand-assembled IDX files: big-endian magic and extents, then raw bytes.
inline std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t rows,
                                            std::uint32_t cols,
                                            const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  for (auto v : {0x00000803u, count, rows, cols}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  for (auto v : {0x00000801u, static_cast<std::uint32_t>(labels.size())}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace oracle
