#include <cmath>

#include "doctest.h"
#include "genet/error.hpp"
#include "genet/nn.hpp"
#include "genet/ops.hpp"
#include "oracles.hpp"

using namespace genet;

namespace {

struct ConvCase {
  std::size_t batch, cin, h, w, cout, k, stride, pad, groups;
};

void check_conv_against_oracle(const ConvCase& c, Rng& rng, bool with_bias) {
  auto x = oracle::random_tensor<double>({c.batch, c.cin, c.h, c.w}, rng);
  auto wt = oracle::random_tensor<double>({c.cout, c.cin / c.groups, c.k, c.k}, rng);
  std::optional<TensorD> bias;
  if (with_bias) bias = oracle::random_tensor<double>({c.cout}, rng);
  auto y = conv2d(x, wt, bias, {c.stride, c.pad, c.groups});
  auto ref = oracle::conv2d(x.to_vector(), c.batch, c.cin, c.h, c.w, wt.to_vector(), c.cout, c.k,
                            c.stride, c.pad, c.groups);
  REQUIRE(y.numel() == ref.size());
  const std::size_t plane = ref.size() / (c.batch * c.cout);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double b = with_bias ? bias->at((i / plane) % c.cout) : 0.0;
    CHECK(y.at(i) == doctest::Approx(ref[i] + b).epsilon(1e-10));
  }
}

}  // namespace

TEST_CASE("conv2d matches the direct loop") {
  Rng rng(11);
  const ConvCase cases[] = {
      {2, 4, 6, 6, 8, 3, 1, 1, 1}, {2, 4, 6, 6, 8, 3, 1, 1, 2}, {1, 4, 7, 5, 4, 3, 2, 1, 4},
      {3, 6, 5, 5, 6, 1, 1, 0, 3}, {1, 3, 9, 9, 6, 3, 2, 0, 1}, {2, 8, 4, 4, 16, 3, 1, 1, 8},
      {1, 2, 3, 3, 2, 3, 1, 2, 2},
  };
  for (const auto& c : cases) {
    check_conv_against_oracle(c, rng, false);
    check_conv_against_oracle(c, rng, true);
  }
}

TEST_CASE("grouped conv equals per-group standard convs (float)") {
  Rng rng(5);
  for (std::size_t groups : {1u, 2u, 4u, 8u}) {
    const std::size_t cin = 8, cout = 16, h = 6, w = 6;
    auto x = oracle::random_tensor<float>({2, cin, h, w}, rng);
    auto wt = oracle::random_tensor<float>({cout, cin / groups, 3, 3}, rng);
    auto y = conv2d<float>(x, wt, std::nullopt, {1, 1, groups});
    std::vector<double> xd(x.data().begin(), x.data().end());
    std::vector<double> wd(wt.data().begin(), wt.data().end());
    auto ref = oracle::conv2d_per_group(xd, 2, cin, h, w, wd, cout, 3, 1, 1, groups);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.at(i) - ref[i]) < 1e-5);
  }
}

TEST_CASE("conv2d rejects inconsistent shapes") {
  auto x = TensorD::zeros({1, 4, 5, 5});
  CHECK_THROWS_AS(conv2d<double>(x, TensorD::zeros({6, 4, 3, 3}), std::nullopt, {1, 1, 4}), Error);
  CHECK_THROWS_AS(conv2d<double>(x, TensorD::zeros({6, 3, 3, 3}), std::nullopt, {1, 1, 1}), Error);
  CHECK_THROWS_AS(conv_output_extent(2, 5, 1, 0), Error);
  CHECK(conv_output_extent(32, 3, 2, 1) == 16);
}

TEST_CASE("batch norm training statistics and running averages") {
  // Channel 0 holds {1,2,3,4}, channel 1 holds {10,10,10,30}.
  auto x = TensorD({2, 2, 1, 2}, {1, 2, 10, 10, 3, 4, 10, 30});
  BatchNormParams<double> bn(2);
  auto y = bn(x, true);
  const double m0 = 2.5, v0 = 1.25, m1 = 15.0, v1 = 75.0;  // biased variances
  CHECK(y.at(0) == doctest::Approx((1 - m0) / std::sqrt(v0 + 1e-5)));
  CHECK(y.at(7) == doctest::Approx((30 - m1) / std::sqrt(v1 + 1e-5)));
  // Running stats: 0.9 * init + 0.1 * batch, with unbiased (n-1) variance.
  CHECK(bn.running_mean.at(0) == doctest::Approx(0.1 * m0));
  CHECK(bn.running_mean.at(1) == doctest::Approx(0.1 * m1));
  CHECK(bn.running_var.at(0) == doctest::Approx(0.9 + 0.1 * v0 * 4 / 3));
  CHECK(bn.running_var.at(1) == doctest::Approx(0.9 + 0.1 * v1 * 4 / 3));

  auto e = bn(x, false);
  const double rm = bn.running_mean.at(0), rv = bn.running_var.at(0);
  CHECK(e.at(0) == doctest::Approx((1 - rm) / std::sqrt(rv + 1e-5)));
}

TEST_CASE("pooling, linear, softmax") {
  auto x = TensorD({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(global_avg_pool(x).to_vector() == std::vector<double>{2.5, 6.5});

  auto in = TensorD({2, 2}, {1, 2, 3, 4});
  auto w = TensorD({2, 3}, {1, 0, 1, 0, 1, 1});
  auto b = TensorD({3}, {0.5, 0, -1});
  CHECK(linear(in, w, b).to_vector() == std::vector<double>{1.5, 2, 2, 3.5, 4, 6});

  auto p = softmax(TensorD({2, 3}, {0, 0, 0, 1000, 0, -1000}));
  CHECK(p.at(0) == doctest::Approx(1.0 / 3));
  CHECK(p.at(3) == doctest::Approx(1.0));
  CHECK(p.at(5) == 0.0);
}

TEST_CASE("cross entropy and entropy against direct formulas") {
  Rng rng(2);
  auto logits = oracle::random_tensor<double>({4, 5}, rng, 3.0);
  const std::vector<std::int32_t> labels{0, 3, 4, 1};
  auto ce = per_sample_cross_entropy(logits, labels);
  auto h = entropy_of_logits(logits, 2.0);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> row(logits.data().begin() + i * 5, logits.data().begin() + i * 5 + 5);
    CHECK(ce.at(i) == doctest::Approx(oracle::cross_entropy(row, labels[i])).epsilon(1e-12));
    CHECK(h.at(i) == doctest::Approx(oracle::entropy(row, 2.0)).epsilon(1e-12));
  }
  auto zeros = TensorD::zeros({1, 10});
  CHECK(per_sample_cross_entropy(zeros, std::vector<std::int32_t>{7}).at(0) ==
        doctest::Approx(std::log(10.0)));
  CHECK_THROWS_AS(per_sample_cross_entropy(zeros, std::vector<std::int32_t>{10}), Error);
  // Large logits stay finite after max subtraction.
  auto big = TensorD({1, 2}, {1e4, 0});
  CHECK(per_sample_cross_entropy(big, std::vector<std::int32_t>{1}).at(0) ==
        doctest::Approx(1e4));
}

TEST_CASE("He initialisation scale") {
  Rng rng(9);
  auto conv = make_conv<double>(64, 128, 3, {1, 1, 1}, rng);
  double s2 = 0;
  for (double v : conv.weight.data()) s2 += v * v;
  const double var = s2 / static_cast<double>(conv.weight.numel());
  CHECK(var == doctest::Approx(2.0 / (64 * 9)).epsilon(0.05));
  CHECK_FALSE(conv.bias.has_value());
  CHECK(conv.param_count() == 128 * 64 * 9);
}
