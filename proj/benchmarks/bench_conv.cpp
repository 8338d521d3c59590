#include <benchmark/benchmark.h>

#include "genet/nn.hpp"
#include "genet/ops.hpp"
#include "genet/tensor.hpp"

using namespace genet;

namespace {

Tensor random(Shape shape, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Tensor(std::move(shape), std::move(v));
}

// Direct loop, the reference the GEMM path is compared against.
void naive_conv(const Tensor& x, const Tensor& w, std::size_t groups, std::vector<float>& out) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), cg = cin / groups, og = cout / groups;
  const auto xs = x.data();
  const auto ws = w.data();
  out.assign(n * cout * h * wd, 0.0f);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o) {
      const std::size_t g = o / og;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < wd; ++xx) {
          float acc = 0;
          for (std::size_t c = 0; c < cg; ++c)
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const long iy = static_cast<long>(y + ky) - 1, ix = static_cast<long>(xx + kx) - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                  continue;
                acc += xs[((b * cin + g * cg + c) * h + iy) * wd + ix] *
                       ws[((o * cg + c) * 3 + ky) * 3 + kx];
              }
          out[((b * cout + o) * h + y) * wd + xx] = acc;
        }
    }
}

void set_counters(benchmark::State& state, std::size_t macs) {
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(macs) * state.iterations(),
                                               benchmark::Counter::kIsRate);
}

// Args: channels, groups. 32 images of 16x16, 3x3 kernel, stride 1, pad 1.
void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto g = static_cast<std::size_t>(state.range(1));
  Rng rng(0);
  auto x = random({32, c, 16, 16}, rng);
  auto w = random({c, c / g, 3, 3}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d<float>(x, w, std::nullopt, {1, 1, g}));
  set_counters(state, 32 * c * (c / g) * 9 * 256);
}
BENCHMARK(BM_ConvForward)->Args({48, 1})->Args({48, 3})->Args({48, 48})->Args({96, 1})->Args({96, 3});

void BM_ConvForwardNaive(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto g = static_cast<std::size_t>(state.range(1));
  Rng rng(0);
  auto x = random({32, c, 16, 16}, rng);
  auto w = random({c, c / g, 3, 3}, rng);
  std::vector<float> out;
  for (auto _ : state) {
    naive_conv(x, w, g, out);
    benchmark::DoNotOptimize(out.data());
  }
  set_counters(state, 32 * c * (c / g) * 9 * 256);
}
BENCHMARK(BM_ConvForwardNaive)->Args({48, 1})->Args({48, 3});

void BM_ConvForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto g = static_cast<std::size_t>(state.range(1));
  Rng rng(0);
  auto x = random({32, c, 16, 16}, rng).set_requires_grad(true);
  auto w = random({c, c / g, 3, 3}, rng).set_requires_grad(true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    backward(sum(conv2d<float>(x, w, std::nullopt, {1, 1, g})));
  }
  set_counters(state, 3 * 32 * c * (c / g) * 9 * 256);
}
BENCHMARK(BM_ConvForwardBackward)->Args({48, 1})->Args({48, 3});

}  // namespace
