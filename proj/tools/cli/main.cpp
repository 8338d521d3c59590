#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "genet/error.hpp"
#include "genet/tensor.hpp"
#include "run_config.hpp"

namespace {

std::string preset_help() {
  std::string text = "preset name or INI path (presets:";
  for (const auto& name : genet::cli::preset_names()) text += " " + name;
  return text + ")";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace genet::cli;
  genet::tune_allocator();

  CLI::App app{"Group ensemble networks: train, evaluate and analyse shared-base multi-head models"};
  app.require_subcommand(1);
  const std::string config_help = preset_help();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model and write metrics, checkpoint and summary");
  train->add_option("-c,--config", train_args.config, config_help)->required();
  train->add_option("--set", train_args.overrides, "override section.key=value")->take_all();
  train->add_option("-o,--output-dir", train_args.output_dir, "artifact directory");
  train->add_flag("-q,--quiet", train_args.quiet, "no per-epoch progress");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  eval->add_option("-c,--config", eval_args.config, "data settings (defaults to the checkpoint's)");
  eval->add_option("--set", eval_args.overrides, "override section.key=value")->take_all();
  eval->add_option("--mode", eval_args.mode, "logit | probability | both")
      ->check(CLI::IsMember({"logit", "probability", "both"}));
  eval->add_option("--split", eval_args.split, "val | train");
  eval->add_option("--json", eval_args.json_out, "write the report as JSON");

  std::string scope = "all";
  std::uint64_t grad_seed = 0;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks in float64");
  grad->add_option("--scope", scope, "ops | model | all");
  grad->add_option("--seed", grad_seed, "input seed");

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "ensemble-accuracy statistics (analytic and Monte Carlo)");
  stats->add_option("--mu", stats_args.stats.mu, "member mean accuracy");
  stats->add_option("--sigma", stats_args.stats.sigma, "member standard deviation");
  stats->add_option("--n", stats_args.stats.n, "ensemble size");
  stats->add_option("--rho", stats_args.stats.rho, "pairwise correlation");
  stats->add_option("--trials", stats_args.stats.num_trials, "Monte Carlo trials");
  stats->add_option("--seed", stats_args.stats.seed, "sampler seed");
  stats->add_option("--bins", stats_args.stats.bins, "histogram bins");
  stats->add_option("--workers", stats_args.workers, "threads (0 = hardware)");
  stats->add_option("--out", stats_args.out, "CSV path (stdout when omitted)");

  ParamsArgs params_args;
  std::size_t match = 0;
  auto* params = app.add_subcommand("params", "parameter counts and channel matching");
  params->add_option("-c,--config", params_args.config, config_help)->required();
  params->add_option("--set", params_args.overrides, "override section.key=value")->take_all();
  auto* match_opt = params->add_option("--match", match, "solve the width multiplier for n groups");
  params->add_option("--tolerance", params_args.tolerance, "relative parameter tolerance");

  std::string show_config;
  std::vector<std::string> show_overrides;
  auto* config = app.add_subcommand("config", "print the fully resolved configuration");
  config->add_option("-c,--config", show_config, config_help)->required();
  config->add_option("--set", show_overrides, "override section.key=value")->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_args, std::cout, std::cerr);
    if (*eval) return cmd_eval(eval_args, std::cout);
    if (*grad) return cmd_gradcheck(scope, grad_seed, std::cout);
    if (*stats) return cmd_stats(stats_args, std::cout);
    if (*params) {
      if (*match_opt) params_args.match = match;
      return cmd_params(params_args, std::cout);
    }
    if (*config) return cmd_config(show_config, show_overrides, std::cout);
  } catch (const genet::Error& e) {
    std::cerr << "genet: error[" << genet::error_code_name(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "genet: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
