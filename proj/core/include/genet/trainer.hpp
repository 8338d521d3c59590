#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "genet/aggregation.hpp"
#include "genet/data.hpp"
#include "genet/model.hpp"

namespace genet {

struct OptimizerConfig {
  double learning_rate = 0.25;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = false;

  void validate() const;
};

struct Schedule {
  std::size_t total_epochs = 300;
  std::vector<std::size_t> milestones{180, 240};
  double gamma = 0.1;
  // Linear ramp from lr/10 at epoch 0 to lr at epoch warmup_epochs.
  std::size_t warmup_epochs = 0;

  void validate() const;
};

double lr_at(std::size_t epoch, const Schedule& schedule, double base_lr);

// Momentum SGD over a model's parameter list:
//   v <- momentum * v + g + wd * p;  p <- p - lr * v
// with wd applied only to parameters flagged for weight decay. Nesterov uses
// p <- p - lr * (g + wd * p + momentum * v) after the velocity update.
template <typename T>
class BasicSgd {
 public:
  BasicSgd(std::vector<NamedParam<T>> params, const OptimizerConfig& config);

  // Throws kArgument naming the first parameter without a gradient.
  void step(double lr);
  void zero_grad();

  const std::vector<NamedParam<T>>& params() const { return params_; }
  const std::vector<T>& velocity(std::size_t index) const { return velocity_.at(index); }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<std::vector<T>> velocity_;
  OptimizerConfig config_;
};

using Sgd = BasicSgd<float>;

struct EvalResult {
  std::vector<double> head_errs;  // percent
  double ensemble_err = 0.0;
  double mean_member_err = 0.0;
  double gap = 0.0;  // mean_member_err - ensemble_err
  std::size_t samples = 0;
};

// Top-1 errors of each head and of the combined output, BN in eval mode.
template <typename T>
EvalResult evaluate(BasicGENetModel<T>& model, const Dataset& data, CombinationMode mode,
                    std::size_t batch_size = 256);

// Samples on which every head predicts the same class, and how often each
// combination mode returns that class.
struct AgreementReport {
  std::size_t samples = 0;
  std::size_t unanimous = 0;
  std::size_t logit_agrees = 0;
  std::size_t probability_agrees = 0;
};

template <typename T>
AgreementReport combination_agreement(BasicGENetModel<T>& model, const Dataset& data,
                                      std::size_t batch_size = 256);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over batches of the per-head mean loss
  std::vector<double> head_errs;
  double ensemble_err = 0.0;
  double mean_member_err = 0.0;
  double gap = 0.0;
  double seconds = 0.0;  // 0 in deterministic mode
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
};

struct TrainOptions {
  std::size_t batch_size = 128;
  bool drop_last = false;
  AugmentPolicy augment = AugmentPolicy::kNone;
  CombinationMode combination = CombinationMode::kLogit;
  std::size_t eval_batch_size = 256;
  std::uint64_t seed = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Loss of one minibatch: sum over heads of the weighted per-sample cross
// entropy. Returns the scalar graph root.
template <typename T>
BasicTensor<T> minibatch_loss(BasicGENetModel<T>& model, const BasicTensor<T>& images,
                              std::span<const std::int32_t> labels,
                              const AggregationStrategy& strategy, Rng& weight_rng);

// Shuffling, augmentation and sample weights each draw from their own stream
// derived from options.seed. Throws kDiverged on a non-finite loss.
template <typename T>
RunMetrics train(BasicGENetModel<T>& model, const DatasetPair& data,
                 const AggregationStrategy& strategy, const OptimizerConfig& optimizer,
                 const Schedule& schedule, const TrainOptions& options);

// Columns: epoch,lr,train_loss,head_err_0..head_err_{n-1},ensemble_err,gap,seconds
void write_metrics_csv(std::ostream& out, const RunMetrics& metrics);

}  // namespace genet
