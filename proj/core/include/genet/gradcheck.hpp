#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genet/tensor.hpp"

namespace genet {

using ScalarFn = std::function<double(const TensorD&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate
// of x, or only for `coords` when given (other entries are left at zero).
// Evaluated with graph recording disabled.
TensorD finite_difference_grad(const ScalarFn& f, const TensorD& x, double h = 1e-3,
                               const std::vector<std::size_t>* coords = nullptr);

// |autodiff - fd| / max(|autodiff|, |fd|, floor), maximised over the checked
// coordinates. The floor keeps near-zero gradients from dominating.
double max_relative_error(std::span<const double> autodiff, std::span<const double> fd,
                          const std::vector<std::size_t>& coords, double floor = 1e-6);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-4;
  double floor = 1e-6;
  // Per input tensor; 0 checks every coordinate.
  std::size_t max_coords_per_input = 0;
  std::uint64_t coord_seed = 0;
};

using MultiFn = std::function<TensorD(const std::vector<TensorD>&)>;

// Compares backward() of `f` against central differences for each input.
// `f` must return a scalar and be deterministic.
GradCheckResult check_gradients(const std::string& name, const MultiFn& f,
                                const std::vector<TensorD>& inputs,
                                const GradCheckOptions& options = {});

}  // namespace genet
