#include "genet/aggregation.hpp"

#include <algorithm>
#include <cmath>

#include "genet/error.hpp"
#include "genet/nn.hpp"
#include "genet/ops.hpp"

namespace genet {

void AggregationStrategy::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    fail(ErrorCode::kConfig, "wagging sigma must be >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::kConfig, "boosting temperature must be > 0");
  }
}

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kAveraging: return "Averaging";
    case StrategyKind::kWagging: return "Wagging";
    case StrategyKind::kBoosting: return "Boosting";
  }
  return "?";
}

std::string_view to_string(CombinationMode mode) {
  return mode == CombinationMode::kLogit ? "logit" : "probability";
}

StrategyKind parse_strategy_kind(std::string_view text) {
  if (text == "Averaging") return StrategyKind::kAveraging;
  if (text == "Wagging") return StrategyKind::kWagging;
  if (text == "Boosting") return StrategyKind::kBoosting;
  fail(ErrorCode::kConfig, "unknown aggregation strategy '" + std::string(text) +
                               "' (expected Averaging, Wagging or Boosting)");
}

CombinationMode parse_combination_mode(std::string_view text) {
  if (text == "logit") return CombinationMode::kLogit;
  if (text == "probability" || text == "prob") return CombinationMode::kProbability;
  fail(ErrorCode::kConfig, "unknown combination mode '" + std::string(text) +
                               "' (expected logit or probability)");
}

template <typename T>
BasicTensor<T> compute_weights(const AggregationStrategy& strategy, std::size_t num_heads,
                               std::size_t batch, const BasicTensor<T>* head_logits, Rng& rng) {
  strategy.validate();
  if (num_heads == 0 || batch == 0) fail(ErrorCode::kShape, "compute_weights on an empty batch");
  std::vector<T> w(num_heads * batch, T(1));
  T fill = T(1);
  switch (strategy.kind) {
    case StrategyKind::kAveraging:
      break;
    case StrategyKind::kWagging:
      for (auto& v : w) v = static_cast<T>(std::max(0.0, rng.normal(1.0, strategy.sigma)));
      break;
    case StrategyKind::kBoosting: {
      if (head_logits == nullptr) {
        fail(ErrorCode::kArgument, "boosting weights need the head logits of the minibatch");
      }
      const BasicTensor<T>& logits = *head_logits;
      if (logits.rank() != 3 || logits.dim(0) != num_heads || logits.dim(1) != batch) {
        fail(ErrorCode::kShape, "head logits " + shape_str(logits.shape()) + " do not match [" +
                                    std::to_string(num_heads) + "," + std::to_string(batch) +
                                    ",C]");
      }
      NoGradGuard no_grad;
      fill = std::min(T(1), static_cast<T>(std::log(static_cast<double>(logits.dim(2)))));
      for (std::size_t m = 1; m < num_heads; ++m) {
        const BasicTensor<T> entropy =
            entropy_of_logits(select(logits, m - 1), strategy.temperature);
        std::copy(entropy.data().begin(), entropy.data().end(),
                  w.begin() + static_cast<std::ptrdiff_t>(m * batch));
      }
      break;
    }
  }
  for (std::size_t m = 0; m < num_heads; ++m) {
    auto row = w.begin() + static_cast<std::ptrdiff_t>(m * batch);
    if (std::all_of(row, row + static_cast<std::ptrdiff_t>(batch), [](T v) { return v == T(0); })) {
      std::fill(row, row + static_cast<std::ptrdiff_t>(batch), fill);
    }
  }
  return BasicTensor<T>({num_heads, batch}, std::move(w));
}

template <typename T>
BasicTensor<T> weighted_loss(const BasicTensor<T>& per_sample_losses, const BasicTensor<T>& weights) {
  if (per_sample_losses.rank() != 1 || weights.rank() != 1 ||
      per_sample_losses.numel() != weights.numel()) {
    fail(ErrorCode::kShape, "weighted_loss length mismatch: losses " +
                                shape_str(per_sample_losses.shape()) + ", weights " +
                                shape_str(weights.shape()));
  }
  double total = 0.0;
  for (T v : weights.data()) {
    if (v < T(0)) fail(ErrorCode::kArgument, "weighted_loss needs non-negative weights");
    total += static_cast<double>(v);
  }
  const BasicTensor<T> constant = weights.detach();
  return scale(sum(mul(per_sample_losses, constant)),
               static_cast<T>(1.0 / (total + kWeightedLossEpsilon)));
}

template <typename T>
BasicTensor<T> total_loss(const std::vector<BasicTensor<T>>& head_losses) {
  if (head_losses.empty()) fail(ErrorCode::kArgument, "total_loss needs at least one head");
  BasicTensor<T> acc = head_losses.front();
  for (std::size_t m = 1; m < head_losses.size(); ++m) acc = add(acc, head_losses[m]);
  return acc;
}

template <typename T>
BasicTensor<T> combine_outputs(const BasicTensor<T>& head_logits, CombinationMode mode) {
  if (head_logits.rank() != 3) {
    fail(ErrorCode::kShape, "combine_outputs expects [n,B,C], got " +
                                shape_str(head_logits.shape()));
  }
  NoGradGuard no_grad;
  const std::size_t n = head_logits.dim(0), rows = head_logits.dim(1), cols = head_logits.dim(2);
  std::vector<T> out(rows * cols, T(0));
  for (std::size_t m = 0; m < n; ++m) {
    BasicTensor<T> member = select(head_logits, m);
    if (mode == CombinationMode::kProbability) member = softmax(member);
    const auto v = member.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  const T inv = T(1) / static_cast<T>(n);
  for (auto& v : out) v *= inv;
  return BasicTensor<T>({rows, cols}, std::move(out));
}

template <typename T>
std::vector<std::int32_t> argmax_rows(const BasicTensor<T>& scores) {
  if (scores.rank() != 2) fail(ErrorCode::kShape, "argmax_rows expects [B,C]");
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  const auto v = scores.data();
  std::vector<std::int32_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    }
    out[r] = static_cast<std::int32_t>(best);
  }
  return out;
}

#define GENET_INSTANTIATE_AGG(T)                                                               \
  template BasicTensor<T> compute_weights(const AggregationStrategy&, std::size_t, std::size_t, \
                                          const BasicTensor<T>*, Rng&);                        \
  template BasicTensor<T> weighted_loss(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> total_loss(const std::vector<BasicTensor<T>>&);                      \
  template BasicTensor<T> combine_outputs(const BasicTensor<T>&, CombinationMode);             \
  template std::vector<std::int32_t> argmax_rows(const BasicTensor<T>&);

GENET_INSTANTIATE_AGG(float)
GENET_INSTANTIATE_AGG(double)

}  // namespace genet
