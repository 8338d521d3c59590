#include "genet/gradcheck_suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>

#include "genet/aggregation.hpp"
#include "genet/model.hpp"
#include "genet/nn.hpp"
#include "genet/ops.hpp"
#include "genet/rng.hpp"
#include "genet/trainer.hpp"

namespace genet {

namespace {

TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(lo, hi);
  return TensorD(std::move(shape), std::move(values));
}

// Values bounded away from zero, for ops with a kink or pole at 0.
TensorD away_from_zero(Rng& rng, Shape shape, double min_abs = 0.1, double max_abs = 1.0) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) {
    v = rng.uniform(min_abs, max_abs);
    if (rng.bernoulli(0.5)) v = -v;
  }
  return TensorD(std::move(shape), std::move(values));
}

// Reduces any output to a scalar through fixed random weights, so every
// output element contributes with a distinct coefficient.
TensorD weighted_sum(const TensorD& out, std::uint64_t seed) {
  Rng rng(seed);
  const TensorD w = random_tensor(rng, out.shape());
  return sum(mul(out, w));
}

}  // namespace

bool GradSuiteReport::passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

void GradSuiteReport::print(std::ostream& out) const {
  const auto flags = out.flags();
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(36) << c.name
        << " max_rel_err=" << std::scientific << std::setprecision(3) << c.max_rel_error
        << " coords=" << c.coords_checked << '\n';
    out.flags(flags);
  }
  const auto failed = std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; });
  out << checks.size() << " checks, " << failed << " failed\n";
}

GradSuiteReport run_ops_gradcheck(std::uint64_t seed, const GradCheckOptions& options) {
  GradSuiteReport report;
  Rng rng(seed);
  auto check = [&](const std::string& name, std::vector<TensorD> inputs,
                   const std::function<TensorD(const std::vector<TensorD>&)>& op) {
    const std::uint64_t wseed = rng.next_u64();
    MultiFn f = [&, wseed](const std::vector<TensorD>& in) { return weighted_sum(op(in), wseed); };
    report.checks.push_back(check_gradients(name, f, inputs, options));
  };
  using V = std::vector<TensorD>;

  check("add", {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})},
        [](const V& in) { return add(in[0], in[1]); });
  check("add_broadcast", {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 1, 1})},
        [](const V& in) { return add(in[0], in[1]); });
  check("sub", {random_tensor(rng, {5}), random_tensor(rng, {5})},
        [](const V& in) { return sub(in[0], in[1]); });
  check("mul", {random_tensor(rng, {3, 3}), random_tensor(rng, {3, 3})},
        [](const V& in) { return mul(in[0], in[1]); });
  check("mul_scalar_broadcast", {random_tensor(rng, {4, 2}), random_tensor(rng, {})},
        [](const V& in) { return mul(in[0], in[1]); });
  check("div", {random_tensor(rng, {6}), away_from_zero(rng, {6}, 0.5, 1.5)},
        [](const V& in) { return div(in[0], in[1]); });
  check("neg", {random_tensor(rng, {7})},
        [](const V& in) { return elementwise(UnaryOp::kNeg, in[0]); });
  check("relu", {away_from_zero(rng, {4, 5})}, [](const V& in) { return relu(in[0]); });
  check("exp", {random_tensor(rng, {6})},
        [](const V& in) { return elementwise(UnaryOp::kExp, in[0]); });
  check("log", {random_tensor(rng, {6}, 0.5, 2.0)},
        [](const V& in) { return elementwise(UnaryOp::kLog, in[0]); });
  check("square", {random_tensor(rng, {6})},
        [](const V& in) { return elementwise(UnaryOp::kSquare, in[0]); });
  check("scale", {random_tensor(rng, {3, 2})}, [](const V& in) { return scale(in[0], -2.5); });
  check("matmul", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})},
        [](const V& in) { return matmul(in[0], in[1]); });
  check("reduce_sum_axis", {random_tensor(rng, {2, 3, 4})},
        [](const V& in) { return reduce(ReduceKind::kSum, in[0], {1}); });
  check("reduce_mean_axes", {random_tensor(rng, {2, 3, 4})},
        [](const V& in) { return reduce(ReduceKind::kMean, in[0], {0, 2}); });
  check("narrow", {random_tensor(rng, {3, 6, 2})},
        [](const V& in) { return narrow(in[0], 1, 2, 3); });
  check("stack", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
        [](const V& in) { return stack(V{in[0], in[1]}); });
  check("select", {random_tensor(rng, {3, 2, 2})}, [](const V& in) { return select(in[0], 1); });

  auto conv_check = [&](const std::string& name, std::size_t cin, std::size_t cout,
                        std::size_t k, Conv2dOptions opt, bool with_bias) {
    V inputs{random_tensor(rng, {2, cin, 5, 5}), random_tensor(rng, {cout, cin / opt.groups, k, k})};
    if (with_bias) inputs.push_back(random_tensor(rng, {cout}));
    check(name, inputs, [opt, with_bias](const V& in) {
      std::optional<TensorD> bias;
      if (with_bias) bias = in[2];
      return conv2d(in[0], in[1], bias, opt);
    });
  };
  conv_check("conv2d_3x3", 3, 4, 3, {1, 1, 1}, true);
  conv_check("conv2d_stride2", 2, 3, 3, {2, 1, 1}, false);
  conv_check("conv2d_groups2", 4, 6, 3, {1, 1, 2}, false);
  conv_check("conv2d_depthwise", 4, 4, 3, {1, 1, 4}, true);
  conv_check("conv2d_pointwise", 4, 2, 1, {1, 0, 1}, false);

  check("batch_norm_train",
        {random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {2}, 0.5, 1.5), random_tensor(rng, {2})},
        [](const V& in) {
          TensorD rm = TensorD::zeros({2});
          TensorD rv = TensorD::ones({2});
          return batch_norm2d(in[0], in[1], in[2], rm, rv, true, 0.1, 1e-5);
        });
  check("batch_norm_eval",
        {random_tensor(rng, {2, 2, 2, 2}), random_tensor(rng, {2}), random_tensor(rng, {2})},
        [](const V& in) {
          TensorD rm = TensorD::from({0.3, -0.2}, {2});
          TensorD rv = TensorD::from({1.5, 0.7}, {2});
          return batch_norm2d(in[0], in[1], in[2], rm, rv, false, 0.1, 1e-5);
        });
  check("global_avg_pool", {random_tensor(rng, {2, 3, 4, 4})},
        [](const V& in) { return global_avg_pool(in[0]); });
  check("linear", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}), random_tensor(rng, {5})},
        [](const V& in) { return linear(in[0], in[1], in[2]); });
  check("softmax", {random_tensor(rng, {3, 5}, -2.0, 2.0)},
        [](const V& in) { return softmax(in[0]); });
  check("cross_entropy", {random_tensor(rng, {4, 5}, -2.0, 2.0)}, [](const V& in) {
    const std::int32_t labels[] = {0, 3, 4, 1};
    return per_sample_cross_entropy(in[0], std::span<const std::int32_t>(labels));
  });
  check("weighted_loss", {random_tensor(rng, {4}, 0.1, 2.0)}, [](const V& in) {
    return weighted_loss(in[0], TensorD::from({0.5, 1.0, 2.0, 0.0}, {4}));
  });
  return report;
}

GradSuiteReport run_model_gradcheck(std::uint64_t seed) {
  GradSuiteReport report;
  GENetConfig cfg = GENetConfig::tiny();
  cfg.in_channels = 1;
  cfg.num_classes = 4;
  cfg.num_groups = 2;
  cfg.split_layer = SplitLayer::kConv3;
  Rng rng(seed);
  GENetModelD model(cfg, rng);

  TensorD images = random_tensor(rng, {2, 1, 8, 8});
  const std::vector<std::int32_t> labels{1, 3};
  const auto strategy = AggregationStrategy::averaging();

  auto loss_value = [&](const TensorD& x) {
    Rng unused(0);
    return minibatch_loss(model, x, labels, strategy, unused);
  };

  const auto params = model.parameters();
  for (const auto& p : params) p.tensor.node()->grad.clear();
  TensorD input = images.detach().set_requires_grad(true);
  backward(loss_value(input));

  constexpr double kStep = 1e-6;
  constexpr std::size_t kCoordsPerTensor = 6;
  GradCheckResult by_region[3] = {{"model.shared"}, {"model.grouped"}, {"model.heads"}};
  auto probe_tensor = [&](TensorD tensor, std::span<const double> ad, GradCheckResult& result) {
    std::vector<std::size_t> coords(tensor.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    for (std::size_t i = 0; i < std::min(kCoordsPerTensor, coords.size()); ++i) {
      std::swap(coords[i], coords[i + rng.uniform_int(coords.size() - i)]);
    }
    coords.resize(std::min(kCoordsPerTensor, coords.size()));
    NoGradGuard no_grad;
    auto values = tensor.mutable_data();
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + kStep;
      const double plus = loss_value(images).item();
      values[i] = saved - kStep;
      const double minus = loss_value(images).item();
      values[i] = saved;
      const double fd = (plus - minus) / (2.0 * kStep);
      const double a = ad.empty() ? 0.0 : ad[i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - fd) / denom);
      ++result.coords_checked;
    }
  };
  for (const auto& p : params) {
    probe_tensor(p.tensor, p.tensor.grad(), by_region[static_cast<int>(p.region)]);
  }
  for (auto& r : by_region) {
    r.passed = r.max_rel_error < 1e-4;
    report.checks.push_back(r);
  }
  {
    GradCheckResult r{"model.input"};
    std::vector<double> ad(input.grad().begin(), input.grad().end());
    // The loss is evaluated at `images`; perturb that tensor directly.
    probe_tensor(images, ad, r);
    r.passed = r.max_rel_error < 1e-4;
    report.checks.push_back(r);
  }

  // Shared-base additivity: d(sum_m L_m)/d theta_shared = sum_m dL_m/d theta_shared.
  {
    std::vector<std::vector<double>> total;
    for (const auto& p : params) {
      if (p.region == Region::kShared) total.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    }
    std::vector<std::vector<double>> summed;
    for (const auto& t : total) summed.emplace_back(t.size(), 0.0);
    for (std::size_t m = 0; m < model.num_heads(); ++m) {
      for (const auto& p : params) p.tensor.node()->grad.clear();
      const TensorD logits = model.forward(images, Mode::kTrain);
      const TensorD head_loss = weighted_loss(per_sample_cross_entropy(select(logits, m), labels),
                                              TensorD::ones({labels.size()}));
      backward(head_loss);
      std::size_t k = 0;
      for (const auto& p : params) {
        if (p.region != Region::kShared) continue;
        const auto g = p.tensor.grad();
        for (std::size_t i = 0; i < g.size(); ++i) summed[k][i] += g[i];
        ++k;
      }
    }
    GradCheckResult r{"model.shared_base_additivity"};
    for (std::size_t k = 0; k < total.size(); ++k) {
      std::vector<std::size_t> coords(total[k].size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
      r.max_rel_error = std::max(r.max_rel_error, max_relative_error(summed[k], total[k], coords));
      r.coords_checked += coords.size();
    }
    r.passed = r.coords_checked > 0 && r.max_rel_error < 1e-8;
    report.checks.push_back(r);
    for (const auto& p : params) p.tensor.node()->grad.clear();
  }
  return report;
}

}  // namespace genet
