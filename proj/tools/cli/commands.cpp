#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "genet/checkpoint.hpp"
#include "genet/error.hpp"
#include "genet/gradcheck_suites.hpp"
#include "run_config.hpp"

namespace genet::cli {

namespace {

using nlohmann::ordered_json;

constexpr std::uint64_t kModelInitStream = 0;

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorCode::kIo, "write failed for " + path.string());
}

ordered_json params_json(const ParamCounts& p) {
  return {{"shared", p.shared}, {"grouped", p.grouped}, {"heads", p.heads}, {"total", p.total}};
}

ordered_json eval_json(const EvalResult& r) {
  return {{"ensemble_err", r.ensemble_err},
          {"head_errs", r.head_errs},
          {"mean_member_err", r.mean_member_err},
          {"gap", r.gap},
          {"samples", r.samples}};
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string join_errs(const std::vector<double>& errs) {
  std::string out;
  for (double e : errs) out += (out.empty() ? "" : ",") + fixed(e);
  return out;
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& log) {
  RunConfig config = load_run_config(args.config, args.overrides);
  if (!config.desk_runnable) {
    fail(ErrorCode::kConfig, "preset '" + config.name +
                                 "' documents a full-scale recipe and is not runnable here");
  }
  if (!args.output_dir.empty()) config.output_dir = args.output_dir;
  config = resolve(config);
  const DatasetPair data = load_data(config.data, config.model.num_classes);

  Rng init_rng = Rng(config.seed).derive(kModelInitStream);
  GENetModel model(config.model, init_rng);
  TrainOptions options = train_options(config);
  if (!args.quiet) {
    options.on_epoch = [&](const EpochRecord& r) {
      log << "epoch " << r.epoch + 1 << "/" << config.schedule.total_epochs << " lr=" << r.lr
          << " loss=" << fixed(r.train_loss, 4) << " ens_err=" << fixed(r.ensemble_err)
          << " member_err=" << fixed(r.mean_member_err) << " gap=" << fixed(r.gap) << '\n'
          << std::flush;
    };
  }
  const RunMetrics metrics =
      train(model, data, config.strategy, config.optimizer, config.schedule, options);

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  const std::string config_text = to_ini(config).to_string();
  std::ostringstream csv;
  write_metrics_csv(csv, metrics);
  write_file(dir / "metrics.csv", csv.str());
  write_file(dir / "config.ini", config_text);
  save_checkpoint((dir / "checkpoint.genet").string(), make_checkpoint(model, config_text));

  const EpochRecord& last = metrics.epochs.back();
  double best = last.ensemble_err;
  double seconds = 0.0;
  for (const auto& r : metrics.epochs) {
    best = std::min(best, r.ensemble_err);
    seconds += r.seconds;
  }
  ordered_json summary = {
      {"name", config.name},
      {"seed", config.seed},
      {"num_groups", config.model.num_groups},
      {"split_layer", std::string(to_string(config.model.split_layer))},
      {"head_width_multiplier", config.model.head_width_multiplier},
      {"strategy", std::string(to_string(config.strategy.kind))},
      {"params", params_json(model.count_params())},
      {"epochs", metrics.epochs.size()},
      {"final",
       {{"train_loss", last.train_loss},
        {"ensemble_err", last.ensemble_err},
        {"head_errs", last.head_errs},
        {"mean_member_err", last.mean_member_err},
        {"gap", last.gap}}},
      {"best_ensemble_err", best},
      {"seconds", seconds},
  };
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  out << "run " << config.name << " seed=" << config.seed << " groups=" << config.model.num_groups
      << " params=" << model.count_params().total << '\n'
      << "final ensemble_err=" << fixed(last.ensemble_err) << " head_errs=["
      << join_errs(last.head_errs) << "] gap=" << fixed(last.gap) << '\n'
      << "artifacts in " << dir.string() << '\n';
  return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  GENetModel model = model_from_checkpoint(ckpt);
  IniDocument doc;
  if (args.config.empty()) {
    doc = IniDocument::parse(ckpt.config_text, args.checkpoint);
    for (const auto& item : args.overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) fail(ErrorCode::kConfig, "--set expects key=value, got '" + item + "'");
      doc.set(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
  } else {
    doc = load_config_document(args.config, args.overrides);
  }
  const RunConfig config = parse_run_config(doc);
  const std::size_t classes = model.config().num_classes;
  if (config.model.num_classes != classes) {
    fail(ErrorCode::kConfig, "checkpoint has " + std::to_string(classes) +
                                 " classes, data config has " +
                                 std::to_string(config.model.num_classes));
  }
  const DatasetPair data = load_data(config.data, classes);
  if (args.split != "val" && args.split != "train") {
    fail(ErrorCode::kArgument, "--split must be val or train, got '" + args.split + "'");
  }
  const Dataset& split = args.split == "val" ? data.val : data.train;

  std::vector<CombinationMode> modes;
  if (args.mode == "both") {
    modes = {CombinationMode::kLogit, CombinationMode::kProbability};
  } else {
    modes = {parse_combination_mode(args.mode)};
  }
  ordered_json report = {{"checkpoint", std::filesystem::path(args.checkpoint).filename().string()},
                         {"split", args.split},
                         {"num_groups", model.num_heads()}};
  for (CombinationMode mode : modes) {
    const EvalResult r = evaluate(model, split, mode, config.eval_batch_size);
    out << "mode=" << to_string(mode) << " ensemble_err=" << fixed(r.ensemble_err)
        << " head_errs=[" << join_errs(r.head_errs) << "] mean_member_err="
        << fixed(r.mean_member_err) << " gap=" << fixed(r.gap) << '\n';
    report[std::string(to_string(mode))] = eval_json(r);
  }
  if (modes.size() == 2) {
    const AgreementReport a = combination_agreement(model, split, config.eval_batch_size);
    out << "unanimous=" << a.unanimous << "/" << a.samples << " logit_agrees=" << a.logit_agrees
        << " probability_agrees=" << a.probability_agrees << '\n';
    report["agreement"] = {{"samples", a.samples},
                           {"unanimous", a.unanimous},
                           {"logit_agrees", a.logit_agrees},
                           {"probability_agrees", a.probability_agrees}};
  }
  if (!args.json_out.empty()) write_file(args.json_out, report.dump(2) + "\n");
  return 0;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, std::ostream& out) {
  if (scope != "ops" && scope != "model" && scope != "all") {
    fail(ErrorCode::kArgument, "--scope must be ops, model or all, got '" + scope + "'");
  }
  GradSuiteReport report;
  if (scope != "model") {
    auto ops = run_ops_gradcheck(seed);
    report.checks.insert(report.checks.end(), ops.checks.begin(), ops.checks.end());
  }
  if (scope != "ops") {
    auto model = run_model_gradcheck(seed);
    report.checks.insert(report.checks.end(), model.checks.begin(), model.checks.end());
  }
  report.print(out);
  if (!report.passed()) {
    const auto failed = std::count_if(report.checks.begin(), report.checks.end(),
                                      [](const auto& c) { return !c.passed; });
    fail(ErrorCode::kGradCheck, std::to_string(failed) + " of " +
                                    std::to_string(report.checks.size()) + " gradient checks failed");
  }
  return 0;
}

int cmd_stats(const StatsArgs& args, std::ostream& out) {
  const StatsConfig& cfg = args.stats;
  cfg.validate();
  const Moments analytic = analytic_equicorrelated(cfg.mu, cfg.sigma, cfg.n, cfg.rho);
  const EnsembleDist dist = monte_carlo(cfg, args.workers);
  std::ostringstream csv;
  write_stats_csv(csv, cfg, dist);
  if (args.out.empty()) {
    out << csv.str();
  } else {
    write_file(args.out, csv.str());
  }
  const auto precision = out.precision(8);
  out << "analytic mean=" << analytic.mean << " variance=" << analytic.variance
      << " accuracy=" << accuracy_estimate(cfg.mu, analytic.variance) << '\n'
      << "monte_carlo trials=" << dist.trials << " mean=" << dist.mean
      << " variance=" << dist.variance << " accuracy=" << dist.estimated_accuracy << '\n';
  out.precision(precision);
  return 0;
}

int cmd_params(const ParamsArgs& args, std::ostream& out) {
  const RunConfig config = load_run_config(args.config, args.overrides);
  GENetConfig model = config.model;
  if (config.match_params) model = resolve(config).model;
  const ParamCounts counts = count_params(model);
  out << "groups=" << model.num_groups << " split=" << to_string(model.split_layer)
      << " multiplier=" << format_double(model.head_width_multiplier) << '\n'
      << "shared=" << counts.shared << " grouped=" << counts.grouped << " heads=" << counts.heads
      << " total=" << counts.total << '\n';
  if (args.match) {
    GENetConfig base = config.model;
    base.num_groups = 1;
    base.head_width_multiplier = 1.0;
    const ChannelMatchResult m = channel_match(base, *args.match, base.split_layer, args.tolerance);
    out << "match n=" << *args.match << " multiplier=" << format_double(m.config.head_width_multiplier)
        << " base=" << m.base_params << " matched=" << m.matched_params
        << " deviation=" << fixed(100.0 * m.deviation) << "%\n";
  }
  return 0;
}

int cmd_config(const std::string& config, const std::vector<std::string>& overrides,
               std::ostream& out) {
  out << to_ini(load_run_config(config, overrides)).to_string();
  return 0;
}

}  // namespace genet::cli
