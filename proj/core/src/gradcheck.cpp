#include "genet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "genet/error.hpp"
#include "genet/rng.hpp"

namespace genet {

TensorD finite_difference_grad(const ScalarFn& f, const TensorD& x, double h,
                               const std::vector<std::size_t>* coords) {
  if (!(h > 0.0)) fail(ErrorCode::kArgument, "finite-difference step must be positive");
  NoGradGuard no_grad;
  TensorD probe = x.detach();
  auto values = probe.mutable_data();
  std::vector<double> out(x.numel(), 0.0);
  auto eval_at = [&](std::size_t i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = f(probe);
    values[i] = saved - h;
    const double minus = f(probe);
    values[i] = saved;
    out[i] = (plus - minus) / (2.0 * h);
  };
  if (coords != nullptr) {
    for (std::size_t i : *coords) eval_at(i);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) eval_at(i);
  }
  return TensorD(x.shape(), std::move(out));
}

double max_relative_error(std::span<const double> autodiff, std::span<const double> fd,
                          const std::vector<std::size_t>& coords, double floor) {
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double denom = std::max({std::abs(autodiff[i]), std::abs(fd[i]), floor});
    const double rel = std::abs(autodiff[i] - fd[i]) / denom;
    worst = std::max(worst, rel);
  }
  return worst;
}

GradCheckResult check_gradients(const std::string& name, const MultiFn& f,
                                const std::vector<TensorD>& inputs,
                                const GradCheckOptions& options) {
  std::vector<TensorD> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.push_back(in.detach().set_requires_grad(true));
  {
    TensorD root = f(leaves);
    if (root.numel() != 1) fail(ErrorCode::kShape, name + ": gradcheck function is not scalar");
    backward(root);
  }

  GradCheckResult result{name};
  Rng rng(options.coord_seed);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    std::vector<std::size_t> coords(leaves[k].numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input != 0 && coords.size() > options.max_coords_per_input) {
      // Partial Fisher-Yates: a seeded random subset of coordinates.
      for (std::size_t i = 0; i < options.max_coords_per_input; ++i) {
        const std::size_t j = i + rng.uniform_int(coords.size() - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    ScalarFn slot_fn = [&](const TensorD& probe) {
      std::vector<TensorD> args;
      args.reserve(leaves.size());
      for (std::size_t j = 0; j < leaves.size(); ++j) {
        args.push_back(j == k ? probe : leaves[j].detach());
      }
      return f(args).item();
    };
    const TensorD fd = finite_difference_grad(slot_fn, leaves[k], options.step, &coords);
    std::vector<double> ad(leaves[k].numel(), 0.0);
    if (leaves[k].has_grad()) std::copy(leaves[k].grad().begin(), leaves[k].grad().end(), ad.begin());
    result.max_rel_error = std::max(result.max_rel_error, max_relative_error(ad, fd.data(), coords, options.floor));
    result.coords_checked += coords.size();
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

}  // namespace genet
