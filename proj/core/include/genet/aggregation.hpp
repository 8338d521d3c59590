#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "genet/rng.hpp"
#include "genet/tensor.hpp"

namespace genet {

enum class StrategyKind { kAveraging, kWagging, kBoosting };

// How per-sample weights are assigned to each head's minibatch loss.
struct AggregationStrategy {
  StrategyKind kind = StrategyKind::kAveraging;
  double sigma = 0.2;        // wagging: w ~ N(1, sigma^2), clamped at 0
  double temperature = 2.0;  // boosting: softmax temperature of the entropy weights

  void validate() const;

  static AggregationStrategy averaging() { return {}; }
  static AggregationStrategy wagging(double sigma = 0.2) {
    return {StrategyKind::kWagging, sigma, 2.0};
  }
  static AggregationStrategy boosting(double temperature = 2.0) {
    return {StrategyKind::kBoosting, 0.2, temperature};
  }
};

enum class CombinationMode { kLogit, kProbability };

std::string_view to_string(StrategyKind kind);
std::string_view to_string(CombinationMode mode);
StrategyKind parse_strategy_kind(std::string_view text);
CombinationMode parse_combination_mode(std::string_view text);

// Denominator guard of the weighted minibatch loss.
inline constexpr double kWeightedLossEpsilon = 1e-8;

// SampleWeights [n, B] for one minibatch. Averaging gives all ones; Wagging
// draws i.i.d. N(1, sigma^2) per (head, sample) clamped below at 0; Boosting
// gives ones for head 0 and, for head m, the tempered-softmax entropy of head
// m-1's logits. The result never carries graph history. A row that ends up
// all zero is replaced by a constant min(1, ln C) row.
//
// head_logits ([n, B, C]) may be null except for Boosting.
template <typename T>
BasicTensor<T> compute_weights(const AggregationStrategy& strategy, std::size_t num_heads,
                               std::size_t batch, const BasicTensor<T>* head_logits, Rng& rng);

template <typename T>
BasicTensor<T> compute_weights(const AggregationStrategy& strategy,
                               const BasicTensor<T>& head_logits, Rng& rng) {
  return compute_weights(strategy, head_logits.dim(0), head_logits.dim(1), &head_logits, rng);
}

// (sum_i w_i l_i) / (sum_i w_i + eps). Gradient flows through the losses only.
template <typename T>
BasicTensor<T> weighted_loss(const BasicTensor<T>& per_sample_losses, const BasicTensor<T>& weights);

// Plain sum of the per-head losses.
template <typename T>
BasicTensor<T> total_loss(const std::vector<BasicTensor<T>>& head_losses);

// Test-time combination of HeadLogits [n, B, C] into [B, C]: mean of raw
// logits, or mean of per-head softmax rows. No graph history.
template <typename T>
BasicTensor<T> combine_outputs(const BasicTensor<T>& head_logits, CombinationMode mode);

// Row-wise argmax of a [B, C] tensor; ties resolve to the lowest class index.
template <typename T>
std::vector<std::int32_t> argmax_rows(const BasicTensor<T>& scores);

}  // namespace genet
