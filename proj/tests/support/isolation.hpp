#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "genet/model.hpp"
#include "genet/ops.hpp"

namespace oracle {

struct IsolationReport {
  std::size_t tensors_checked = 0;
  std::vector<std::string> leaks;    // foreign parameters with a non-zero gradient
  std::vector<std::string> missing;  // own parameters that got no gradient at all
};

// Backpropagates the summed logits of head `j` alone and inspects every
// parameter: other heads and other members' slices of grouped tensors must
// hold exactly zero gradient.
template <typename T>
IsolationReport head_isolation(genet::BasicGENetModel<T>& model, const genet::BasicTensor<T>& x,
                               std::size_t j) {
  auto params = model.parameters();
  for (auto& p : params) p.tensor.zero_grad();
  auto logits = model.forward(x, genet::Mode::kTrain);
  genet::backward(genet::sum(genet::select(logits, j)));
  IsolationReport report;
  for (const auto& p : params) {
    ++report.tensors_checked;
    const auto g = p.tensor.grad();
    if (g.empty()) {
      if (p.region == genet::Region::kShared || (p.region == genet::Region::kHead && p.head == j))
        report.missing.push_back(p.name);
      continue;
    }
    if (p.region == genet::Region::kHead) {
      if (p.head == j) continue;
      for (T v : g)
        if (v != T(0)) {
          report.leaks.push_back(p.name);
          break;
        }
    } else if (p.region == genet::Region::kGrouped) {
      const std::size_t slice = g.size() / p.slices;
      for (std::size_t k = 0; k < p.slices; ++k) {
        if (k == j) continue;
        for (std::size_t i = k * slice; i < (k + 1) * slice; ++i)
          if (g[i] != T(0)) {
            report.leaks.push_back(p.name + "[slice " + std::to_string(k) + "]");
            break;
          }
      }
    }
  }
  return report;
}

}  // namespace oracle
