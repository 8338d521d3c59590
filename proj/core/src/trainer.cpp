#include "genet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "genet/error.hpp"
#include "genet/nn.hpp"
#include "genet/ops.hpp"

namespace genet {

namespace {

template <typename T>
BasicTensor<T> convert_batch(const Tensor& batch) {
  if constexpr (std::is_same_v<T, float>) {
    return batch;
  } else {
    std::vector<T> data(batch.data().begin(), batch.data().end());
    return BasicTensor<T>(batch.shape(), std::move(data));
  }
}

enum RngStream : std::uint64_t { kShuffleStream = 1, kAugmentStream = 2, kWeightStream = 3 };

}  // namespace

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::kConfig, "optimizer.learning_rate must be >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    fail(ErrorCode::kConfig, "optimizer.momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) fail(ErrorCode::kConfig, "optimizer.weight_decay must be >= 0");
}

void Schedule::validate() const {
  if (total_epochs == 0) fail(ErrorCode::kConfig, "schedule.total_epochs must be >= 1");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= total_epochs) {
      fail(ErrorCode::kConfig, "schedule.milestones must be < total_epochs");
    }
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      fail(ErrorCode::kConfig, "schedule.milestones must be strictly increasing");
    }
  }
  if (!(gamma > 0.0)) fail(ErrorCode::kConfig, "schedule.gamma must be > 0");
}

double lr_at(std::size_t epoch, const Schedule& schedule, double base_lr) {
  if (epoch >= schedule.total_epochs) {
    fail(ErrorCode::kArgument, "epoch " + std::to_string(epoch) + " outside [0, " +
                                   std::to_string(schedule.total_epochs) + ")");
  }
  if (epoch < schedule.warmup_epochs) {
    const double t = static_cast<double>(epoch) / static_cast<double>(schedule.warmup_epochs);
    return base_lr * (0.1 + 0.9 * t);
  }
  const auto passed = std::count_if(schedule.milestones.begin(), schedule.milestones.end(),
                                    [&](std::size_t m) { return m <= epoch; });
  return base_lr * std::pow(schedule.gamma, static_cast<double>(passed));
}

template <typename T>
BasicSgd<T>::BasicSgd(std::vector<NamedParam<T>> params, const OptimizerConfig& config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), T(0));
}

template <typename T>
void BasicSgd<T>::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) fail(ErrorCode::kArgument, "missing gradient for " + p.name);
  }
  const T rate = static_cast<T>(lr);
  const T mom = static_cast<T>(config_.momentum);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& tensor = params_[k].tensor;
    const T wd = params_[k].weight_decay ? static_cast<T>(config_.weight_decay) : T(0);
    auto values = tensor.mutable_data();
    const auto grad = tensor.grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grad[i] + wd * values[i];
      v[i] = mom * v[i] + g;
      values[i] -= rate * (config_.nesterov ? g + mom * v[i] : v[i]);
    }
  }
}

template <typename T>
void BasicSgd<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
EvalResult evaluate(BasicGENetModel<T>& model, const Dataset& data, CombinationMode mode,
                    std::size_t batch_size) {
  if (data.size() == 0) fail(ErrorCode::kArgument, "cannot evaluate on an empty split");
  if (batch_size == 0) fail(ErrorCode::kArgument, "batch size must be >= 1");
  NoGradGuard no_grad;
  const std::size_t n = model.num_heads();
  std::vector<std::size_t> head_wrong(n, 0);
  std::size_t ens_wrong = 0;
  const BatchPlan plan = make_batch_plan(data.size(), batch_size, false, nullptr);
  for (std::size_t b = 0; b < plan.num_batches(); ++b) {
    const auto idx = plan.batch(b);
    const auto labels = data.batch_labels(idx);
    const BasicTensor<T> logits = model.forward(convert_batch<T>(data.batch_images(idx)), Mode::kEval);
    for (std::size_t m = 0; m < n; ++m) {
      const auto pred = argmax_rows(select(logits, m));
      for (std::size_t i = 0; i < pred.size(); ++i) head_wrong[m] += pred[i] != labels[i];
    }
    const auto pred = argmax_rows(combine_outputs(logits, mode));
    for (std::size_t i = 0; i < pred.size(); ++i) ens_wrong += pred[i] != labels[i];
  }
  EvalResult result;
  result.samples = data.size();
  const double total = static_cast<double>(data.size());
  for (std::size_t m = 0; m < n; ++m) {
    result.head_errs.push_back(100.0 * static_cast<double>(head_wrong[m]) / total);
  }
  result.ensemble_err = 100.0 * static_cast<double>(ens_wrong) / total;
  result.mean_member_err =
      std::accumulate(result.head_errs.begin(), result.head_errs.end(), 0.0) / static_cast<double>(n);
  result.gap = result.mean_member_err - result.ensemble_err;
  return result;
}

template <typename T>
AgreementReport combination_agreement(BasicGENetModel<T>& model, const Dataset& data,
                                      std::size_t batch_size) {
  if (data.size() == 0) fail(ErrorCode::kArgument, "cannot evaluate on an empty split");
  if (batch_size == 0) fail(ErrorCode::kArgument, "batch size must be >= 1");
  NoGradGuard no_grad;
  AgreementReport report;
  report.samples = data.size();
  const BatchPlan plan = make_batch_plan(data.size(), batch_size, false, nullptr);
  for (std::size_t b = 0; b < plan.num_batches(); ++b) {
    const BasicTensor<T> logits =
        model.forward(convert_batch<T>(data.batch_images(plan.batch(b))), Mode::kEval);
    std::vector<std::vector<std::int32_t>> heads;
    for (std::size_t m = 0; m < model.num_heads(); ++m) heads.push_back(argmax_rows(select(logits, m)));
    const auto by_logit = argmax_rows(combine_outputs(logits, CombinationMode::kLogit));
    const auto by_prob = argmax_rows(combine_outputs(logits, CombinationMode::kProbability));
    for (std::size_t i = 0; i < by_logit.size(); ++i) {
      const bool unanimous = std::all_of(heads.begin(), heads.end(),
                                         [&](const auto& h) { return h[i] == heads[0][i]; });
      if (!unanimous) continue;
      ++report.unanimous;
      report.logit_agrees += by_logit[i] == heads[0][i];
      report.probability_agrees += by_prob[i] == heads[0][i];
    }
  }
  return report;
}

template <typename T>
BasicTensor<T> minibatch_loss(BasicGENetModel<T>& model, const BasicTensor<T>& images,
                              std::span<const std::int32_t> labels,
                              const AggregationStrategy& strategy, Rng& weight_rng) {
  const BasicTensor<T> logits = model.forward(images, Mode::kTrain);
  const std::size_t n = logits.dim(0);
  const BasicTensor<T> weights = compute_weights(strategy, n, logits.dim(1), &logits, weight_rng);
  std::vector<BasicTensor<T>> losses;
  losses.reserve(n);
  for (std::size_t m = 0; m < n; ++m) {
    const BasicTensor<T> per_sample = per_sample_cross_entropy(select(logits, m), labels);
    losses.push_back(weighted_loss(per_sample, select(weights, m)));
  }
  return total_loss(losses);
}

template <typename T>
RunMetrics train(BasicGENetModel<T>& model, const DatasetPair& data,
                 const AggregationStrategy& strategy, const OptimizerConfig& optimizer,
                 const Schedule& schedule, const TrainOptions& options) {
  strategy.validate();
  optimizer.validate();
  schedule.validate();
  data.train.validate();
  data.val.validate();
  if (data.train.size() == 0 || data.val.size() == 0) {
    fail(ErrorCode::kArgument, "training needs non-empty train and val splits");
  }
  if (options.batch_size == 0) fail(ErrorCode::kArgument, "batch size must be >= 1");
  if (data.train.num_classes != model.config().num_classes) {
    fail(ErrorCode::kArgument, "dataset has " + std::to_string(data.train.num_classes) +
                                   " classes, model expects " +
                                   std::to_string(model.config().num_classes));
  }

  const Rng root(options.seed);
  Rng shuffle_rng = root.derive(kShuffleStream);
  Rng augment_rng = root.derive(kAugmentStream);
  Rng weight_rng = root.derive(kWeightStream);
  BasicSgd<T> sgd(model.parameters(), optimizer);
  const double heads = static_cast<double>(model.num_heads());
  const bool timed = !deterministic_mode();

  RunMetrics metrics;
  for (std::size_t epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, schedule, optimizer.learning_rate);
    const BatchPlan plan =
        make_batch_plan(data.train.size(), options.batch_size, options.drop_last, &shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < plan.num_batches(); ++b) {
      const auto idx = plan.batch(b);
      Tensor images = data.train.batch_images(idx);
      augment(images, options.augment, augment_rng);
      const auto labels = data.train.batch_labels(idx);
      sgd.zero_grad();
      const BasicTensor<T> loss =
          minibatch_loss(model, convert_batch<T>(images), labels, strategy, weight_rng);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        fail(ErrorCode::kDiverged, "training diverged: non-finite loss at epoch " +
                                       std::to_string(epoch) + " batch " + std::to_string(b));
      }
      loss_sum += value / heads;
      backward(loss);
      sgd.step(lr);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(plan.num_batches(), 1));
    const EvalResult eval = evaluate(model, data.val, options.combination, options.eval_batch_size);
    record.head_errs = eval.head_errs;
    record.ensemble_err = eval.ensemble_err;
    record.mean_member_err = eval.mean_member_err;
    record.gap = eval.gap;
    if (timed) {
      record.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    metrics.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }
  return metrics;
}

void write_metrics_csv(std::ostream& out, const RunMetrics& metrics) {
  const std::size_t n = metrics.epochs.empty() ? 0 : metrics.epochs.front().head_errs.size();
  out << "epoch,lr,train_loss";
  for (std::size_t m = 0; m < n; ++m) out << ",head_err_" << m;
  out << ",ensemble_err,gap,seconds\n";
  const auto old_precision = out.precision(10);
  for (const auto& r : metrics.epochs) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss;
    for (double e : r.head_errs) out << ',' << e;
    out << ',' << r.ensemble_err << ',' << r.gap << ',' << r.seconds << '\n';
  }
  out.precision(old_precision);
}

#define GENET_INSTANTIATE_TRAINER(T)                                                           \
  template class BasicSgd<T>;                                                                  \
  template EvalResult evaluate<T>(BasicGENetModel<T>&, const Dataset&, CombinationMode,         \
                                  std::size_t);                                                \
  template AgreementReport combination_agreement<T>(BasicGENetModel<T>&, const Dataset&,        \
                                                    std::size_t);                              \
  template BasicTensor<T> minibatch_loss<T>(BasicGENetModel<T>&, const BasicTensor<T>&,         \
                                            std::span<const std::int32_t>,                     \
                                            const AggregationStrategy&, Rng&);                 \
  template RunMetrics train<T>(BasicGENetModel<T>&, const DatasetPair&,                        \
                               const AggregationStrategy&, const OptimizerConfig&,             \
                               const Schedule&, const TrainOptions&);

GENET_INSTANTIATE_TRAINER(float)
GENET_INSTANTIATE_TRAINER(double)

}  // namespace genet
