// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,5,12] [--source-dir DIR] [--genet PATH] [--work-dir DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "genet/aggregation.hpp"
#include "genet/error.hpp"
#include "genet/gradcheck_suites.hpp"
#include "genet/model.hpp"
#include "genet/nn.hpp"
#include "genet/ops.hpp"
#include "genet/stats.hpp"
#include "genet/trainer.hpp"
#include "isolation.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace genet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Env {
  fs::path source_dir;
  fs::path genet_exe;
  fs::path work_dir;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  // Denominator |fd| + 1e-8 is approximated by a 1e-8 floor on max(|ad|, |fd|).
  GradCheckOptions opts{1e-6, 1e-4, 1e-8, 0, 0};
  const auto ops = run_ops_gradcheck(0, opts);
  const auto model = run_model_gradcheck(0);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::size_t failed = 0;
  for (const auto* r : {&ops, &model})
    for (const auto& c : r->checks) {
      worst = std::max(worst, c.max_rel_error);
      failed += !c.passed;
    }
  const bool has_model = std::any_of(model.checks.begin(), model.checks.end(), [](const auto& c) {
    return c.name.rfind("model.", 0) == 0;
  });
  const bool pass = failed == 0 && ops.checks.size() >= 20 && has_model && worst < 1e-4 && secs < 60;
  return {pass, std::to_string(ops.checks.size()) + " op checks + " +
                    std::to_string(model.checks.size()) + " model checks, max_rel_err=" +
                    num(worst) + ", " + num(secs) + " s"};
}

Outcome grouped_conv_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0;
  std::size_t instances = 0;
  const std::size_t cins[] = {4, 8, 12};
  for (std::size_t cin : cins)
    for (std::size_t g : {std::size_t{1}, std::size_t{2}, std::size_t{4}, cin}) {
      if (cin % g) continue;
      for (std::size_t rep = 0; rep < 2; ++rep) {
        const std::size_t cout = g * (1 + rng.uniform_int(3));
        const std::size_t k = rep == 0 ? 3 : 1 + 2 * rng.uniform_int(2);
        const std::size_t stride = 1 + rng.uniform_int(2);
        const std::size_t pad = k / 2;
        const std::size_t h = 5 + rng.uniform_int(5), w = 5 + rng.uniform_int(5), b = 2;
        auto x = oracle::random_tensor<float>({b, cin, h, w}, rng);
        auto wt = oracle::random_tensor<float>({cout, cin / g, k, k}, rng);
        auto y = conv2d<float>(x, wt, std::nullopt, {stride, pad, g});
        std::vector<double> xd(x.data().begin(), x.data().end());
        std::vector<double> wd(wt.data().begin(), wt.data().end());
        const auto ref = oracle::conv2d_per_group(xd, b, cin, h, w, wd, cout, k, stride, pad, g);
        if (ref.size() != y.numel()) return {false, "shape mismatch"};
        for (std::size_t i = 0; i < ref.size(); ++i)
          worst = std::max(worst, std::abs(static_cast<double>(y.at(i)) - ref[i]));
        ++instances;
      }
    }
  const double secs = seconds_since(t0);
  return {instances >= 10 && worst <= 1e-5 && secs < 30,
          std::to_string(instances) + " instances over g in {1,2,4,C_in}, max_abs_err=" +
              num(worst) + ", " + num(secs) + " s"};
}

Outcome weighted_loss_exactness() {
  const float exact = weighted_loss(Tensor::from({1, 2, 3}), Tensor::ones({3})).item();
  Rng rng(7);
  double worst = 0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<float> l(16), w(16);
    for (auto& v : l) v = static_cast<float>(rng.uniform(0, 5));
    for (auto& v : w) v = static_cast<float>(rng.uniform(0, 2));
    const float base = weighted_loss(Tensor({16}, l), Tensor({16}, w)).item();
    for (float c : {0.1f, 3.0f, 100.0f}) {
      std::vector<float> wc(w);
      for (auto& v : wc) v *= c;
      const float scaled = weighted_loss(Tensor({16}, l), Tensor({16}, wc)).item();
      worst = std::max(worst, static_cast<double>(std::abs(scaled - base)));
    }
  }
  return {exact == 2.0f && worst <= 1e-6,
          "weighted_loss([1,2,3], ones)=" + num(exact, 9) + ", max rescale drift=" + num(worst)};
}

RunMetrics five_epochs(const AggregationStrategy& strategy, std::vector<float>& final_state) {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.per_class = 20;
  spec.val_per_class = 8;
  spec.seed = 11;
  auto data = synth_blobs(spec);
  normalize(data);
  GENetConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 4;
  cfg.stage_channels = {4, 8, 8};
  cfg.num_classes = 5;
  cfg.num_groups = 3;
  Rng init(123);
  GENetModel model(cfg, init);
  OptimizerConfig opt;
  opt.learning_rate = 0.05;
  Schedule sched;
  sched.total_epochs = 5;
  sched.milestones = {3};
  TrainOptions options;
  options.batch_size = 16;
  options.seed = 99;
  auto metrics = train(model, data, strategy, opt, sched, options);
  for (auto& e : metrics.epochs) e.seconds = 0;
  final_state.clear();
  for (const auto& [name, t] : model.state())
    final_state.insert(final_state.end(), t.data().begin(), t.data().end());
  return metrics;
}

Outcome wagging_zero_sigma() {
  std::vector<float> sa, sw;
  const auto a = five_epochs(AggregationStrategy::averaging(), sa);
  const auto w = five_epochs(AggregationStrategy::wagging(0.0), sw);
  std::ostringstream ca, cw;
  write_metrics_csv(ca, a);
  write_metrics_csv(cw, w);
  const bool same_state =
      sa.size() == sw.size() && std::memcmp(sa.data(), sw.data(), sa.size() * sizeof(float)) == 0;
  return {ca.str() == cw.str() && same_state,
          std::string("5-epoch metrics ") + (ca.str() == cw.str() ? "identical" : "differ") +
              ", final weights " + (same_state ? "bit-identical" : "differ") + " (" +
              std::to_string(sa.size()) + " values)"};
}

Outcome boosting_bounds() {
  Rng rng(5);
  const std::size_t C = 10;
  const double ln_c = std::log(static_cast<double>(C));
  double lo = 1e9, hi = -1e9;
  for (int batch = 0; batch < 10000; ++batch) {
    const double scale = std::exp(rng.uniform(-3, 3));
    auto logits = oracle::random_tensor<float>({3, 4, C}, rng, scale);
    auto w = compute_weights(AggregationStrategy::boosting(rng.uniform(0.5, 4)), logits, rng);
    for (std::size_t i = 4; i < w.numel(); ++i) {
      lo = std::min(lo, static_cast<double>(w.at(i)));
      hi = std::max(hi, static_cast<double>(w.at(i)));
    }
  }
  const bool bounded = lo >= 0.0 && hi <= ln_c + 1e-6;

  auto uniform = TensorD::zeros({2, 3, C});
  Rng r0(0);
  auto wu = compute_weights(AggregationStrategy::boosting(2.0), uniform, r0);
  double uniform_err = 0;
  for (std::size_t i = 3; i < 6; ++i) uniform_err = std::max(uniform_err, std::abs(wu.at(i) - ln_c));

  // Head 1's weighted loss with live boosting weights (computed from both
  // heads' logits) against central differences of the same loss with the
  // weights frozen at the base point.
  Rng r1(3);
  const std::vector<std::int32_t> labels{1, 4, 7, 2};
  auto base = oracle::random_tensor<double>({2, 4, C}, r1, 2.0);
  auto head1_loss = [&](const TensorD& logits, const TensorD& w) {
    auto ce = per_sample_cross_entropy(select(logits, 1), labels);
    return weighted_loss(ce, select(w, 1));
  };
  auto x = base.detach().set_requires_grad(true);
  Rng r2(0);
  auto live_w = compute_weights(AggregationStrategy::boosting(2.0), x, r2);
  backward(head1_loss(x, live_w));
  const auto frozen = live_w.detach();
  double max_diff = 0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < base.numel(); ++i) {
    auto plus = base.detach(), minus = base.detach();
    plus.mutable_data()[i] += h;
    minus.mutable_data()[i] -= h;
    NoGradGuard ng;
    const double fd = (head1_loss(plus, frozen).item() - head1_loss(minus, frozen).item()) / (2 * h);
    const double ad = x.has_grad() ? x.grad()[i] : 0.0;
    max_diff = std::max(max_diff, std::abs(ad - fd));
  }
  const bool no_graph = live_w.is_leaf() && !live_w.requires_grad();
  return {bounded && uniform_err <= 1e-6 && max_diff < 1e-8 && no_graph,
          "range [" + num(lo, 4) + ", " + num(hi, 6) + "] vs ln C=" + num(ln_c, 6) +
              ", uniform |w-ln C|=" + num(uniform_err) + ", |autodiff - fd(frozen w)|=" +
              num(max_diff)};
}

struct McCase {
  std::size_t n;
  double rho;
};
const McCase kMcGrid[] = {{1, 0}, {2, 0}, {4, 0}, {8, 0}, {2, 0.5}, {2, 1.0}};

std::vector<EnsembleDist> mc_results;

const std::vector<EnsembleDist>& mc_grid() {
  if (mc_results.empty()) {
    for (const auto& c : kMcGrid) {
      StatsConfig cfg;
      cfg.n = c.n;
      cfg.rho = c.rho;
      cfg.num_trials = 1000000;
      mc_results.push_back(monte_carlo(cfg, 0));
    }
  }
  return mc_results;
}

Outcome mc_variance() {
  const auto t0 = Clock::now();
  const auto& dists = mc_grid();
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string detail;
  for (std::size_t i = 0; i < std::size(kMcGrid); ++i) {
    const auto& c = kMcGrid[i];
    // sigma^2/n for independent members; (1+rho)/2 sigma^2 for a correlated pair.
    const double expect = c.rho == 0 ? 0.04 / static_cast<double>(c.n) : (1 + c.rho) / 2 * 0.04;
    const double rel = std::abs(dists[i].variance - expect) / expect;
    worst = std::max(worst, rel);
    detail += "n=" + std::to_string(c.n) + ",rho=" + num(c.rho) + ":" + num(dists[i].variance, 4) +
              " ";
  }
  return {worst <= 0.02 && secs < 60,
          detail + "max rel dev=" + num(100 * worst) + "%, " + num(secs) + " s"};
}

Outcome mc_accuracy() {
  const auto& dists = mc_grid();
  double worst = 0;
  for (std::size_t i = 0; i < std::size(kMcGrid); ++i) {
    const auto& c = kMcGrid[i];
    const double var = 0.04 * (1 + (static_cast<double>(c.n) - 1) * c.rho) / static_cast<double>(c.n);
    const double phi = oracle::normal_cdf((0.6 - 0.5) / std::sqrt(var));
    worst = std::max(worst, 100 * std::abs(dists[i].estimated_accuracy - phi));
  }
  return {worst <= 0.5, "max |mc - Phi((mu-0.5)/sd)|=" + num(worst) + " points over 6 configs"};
}

Outcome head_isolation() {
  GENetConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 4;
  cfg.stage_channels = {8, 8, 16};
  cfg.num_groups = 4;
  cfg.split_layer = SplitLayer::kConv3;
  Rng rng(8);
  GENetModel model(cfg, rng);
  auto x = oracle::random_tensor<float>({3, 1, 8, 8}, rng);
  std::size_t leaks = 0, missing = 0, tensors = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    const auto r = oracle::head_isolation(model, x, j);
    leaks += r.leaks.size();
    missing += r.missing.size();
    tensors += r.tensors_checked;
  }
  return {leaks == 0 && missing == 0 && tensors > 0,
          std::to_string(tensors) + " tensor checks over 4 heads, " + std::to_string(leaks) +
              " non-zero foreign gradients"};
}

Outcome parameter_accounting() {
  const auto r29 = GENetConfig::resnet29(100);
  const std::size_t total = count_params(r29).total;
  const bool within = std::abs(static_cast<double>(total) - 5.0e6) <= 0.5e6;
  std::string detail = "ResNet-29 total=" + std::to_string(total) + "; match";
  bool matched = true;
  for (std::size_t n : {2, 3, 4}) {
    try {
      const auto m = channel_match(r29, n, SplitLayer::kConv3);
      matched = matched && m.deviation <= 0.10;
      detail += " n=" + std::to_string(n) + ":" + num(100 * m.deviation) + "%";
    } catch (const Error& e) {
      matched = false;
      detail += " n=" + std::to_string(n) + ":" + e.what();
    }
  }
  return {within && matched, detail};
}

struct RunSummary {
  double ensemble_err = 0;
  double gap = 0;
};

RunSummary train_summary(const Env& env, const std::string& preset,
                         const std::vector<std::string>& overrides, const fs::path& out_dir) {
  cli::TrainArgs args;
  args.config = preset;
  args.overrides = overrides;
  args.output_dir = out_dir.string();
  args.quiet = true;
  std::ostringstream out, log;
  cli::cmd_train(args, out, log);
  const auto summary = nlohmann::json::parse(read_text(out_dir / "summary.json"));
  return {summary["final"]["ensemble_err"].get<double>(), summary["final"]["gap"].get<double>()};
}

Outcome training_direction(const Env& env) {
  const auto t0 = Clock::now();
  const std::string root = "data.root=" + env.source_dir.string();
  double base_sum = 0, genet_sum = 0;
  bool gaps_positive = true;
  std::string detail;
  try {
    for (int seed = 0; seed < 3; ++seed) {
      const std::string s = "run.seed=" + std::to_string(seed);
      const auto base = train_summary(env, "mnist_small", {root, s, "model.num_groups=1"},
                                      env.work_dir / ("c10_n1_s" + std::to_string(seed)));
      const auto ens = train_summary(env, "mnist_small", {root, s},
                                     env.work_dir / ("c10_n3_s" + std::to_string(seed)));
      base_sum += base.ensemble_err;
      genet_sum += ens.ensemble_err;
      gaps_positive = gaps_positive && ens.gap > 0;
      detail += "seed " + std::to_string(seed) + ": n1=" + num(base.ensemble_err) +
                " n3=" + num(ens.ensemble_err) + " gap=" + num(ens.gap) + "; ";
      std::cerr << "  criterion 10 " << detail << std::endl;
    }
  } catch (const Error& e) {
    return {false, std::string("training failed: ") + e.what()};
  }
  const double secs = seconds_since(t0);
  const double base_mean = base_sum / 3, genet_mean = genet_sum / 3;
  return {genet_mean <= base_mean && gaps_positive && secs < 1800,
          detail + "mean n1=" + num(base_mean) + "% n3=" + num(genet_mean) + "%, " +
              num(secs / 60) + " min"};
}

Outcome logit_vs_probability(const Env& env) {
  // A trained checkpoint through the eval command.
  const fs::path dir = env.work_dir / "c11";
  train_summary(env, "tiny_synth", {"schedule.total_epochs=4"}, dir);
  cli::EvalArgs args;
  args.checkpoint = (dir / "checkpoint.genet").string();
  args.json_out = (dir / "eval.json").string();
  std::ostringstream out;
  cli::cmd_eval(args, out);
  const auto report = nlohmann::json::parse(read_text(dir / "eval.json"));
  const bool both = report.contains("logit") && report.contains("probability") &&
                    out.str().find("mode=logit") != std::string::npos &&
                    out.str().find("mode=probability") != std::string::npos;
  const auto& a = report["agreement"];
  const auto unanimous = a["unanimous"].get<std::size_t>();
  const bool ckpt_agree = a["logit_agrees"].get<std::size_t>() == unanimous &&
                          a["probability_agrees"].get<std::size_t>() == unanimous;

  // Random head outputs: validity of both combinations, and equal argmax on
  // every row where all heads agree.
  Rng rng(17);
  std::size_t rows = 0, agreeing = 0, mismatched = 0, invalid = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(3), b = 8, c = 2 + rng.uniform_int(9);
    auto logits = oracle::random_tensor<float>({n, b, c}, rng, rng.uniform(0.1, 8));
    // Correlate heads so unanimity is common.
    auto v = logits.mutable_data();
    for (std::size_t m = 1; m < n; ++m)
      for (std::size_t i = 0; i < b * c; ++i) v[m * b * c + i] += 2.0f * v[i];
    const auto lg = combine_outputs(logits, CombinationMode::kLogit);
    const auto pr = combine_outputs(logits, CombinationMode::kProbability);
    for (std::size_t i = 0; i < b; ++i) {
      double total = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const float p = pr.at(i * c + k);
        invalid += !(p >= 0 && p <= 1) || !std::isfinite(lg.at(i * c + k));
        total += p;
      }
      invalid += std::abs(total - 1.0) > 1e-5;
    }
    const auto pl = argmax_rows(lg), pp = argmax_rows(pr);
    std::vector<std::vector<std::int32_t>> heads;
    for (std::size_t m = 0; m < n; ++m) heads.push_back(argmax_rows(select(logits, m)));
    for (std::size_t i = 0; i < b; ++i) {
      ++rows;
      bool all = true;
      for (std::size_t m = 1; m < n; ++m) all = all && heads[m][i] == heads[0][i];
      if (!all) continue;
      ++agreeing;
      mismatched += pl[i] != heads[0][i] || pp[i] != heads[0][i];
    }
  }
  return {both && ckpt_agree && invalid == 0 && mismatched == 0 && agreeing > 0,
          "eval reports both modes; checkpoint unanimous=" + std::to_string(unanimous) +
              " all agree; random: " + std::to_string(agreeing) + "/" + std::to_string(rows) +
              " unanimous rows, " + std::to_string(mismatched) + " argmax mismatches, " +
              std::to_string(invalid) + " invalid outputs"};
}

int run_genet(const Env& env, const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = "GENET_DETERMINISTIC=1 \"" + env.genet_exe.string() + "\" " + args +
                          " > \"" + stdout_file.string() + "\" 2>/dev/null";
  return std::system(cmd.c_str());
}

Outcome determinism(const Env& env) {
  if (!fs::exists(env.genet_exe)) return {false, "genet executable not found"};
  std::vector<std::string> diffs;
  std::size_t compared = 0;
  fs::path runs[2];
  for (int k = 0; k < 2; ++k) {
    runs[k] = env.work_dir / ("c12_" + std::to_string(k));
    fs::remove_all(runs[k]);
    fs::create_directories(runs[k]);
    const fs::path& d = runs[k];
    int rc = run_genet(env, "train -c tiny_synth --set schedule.total_epochs=3 -o \"" +
                                (d / "run").string() + "\"",
                       d / "train.out");
    rc |= run_genet(env, "eval \"" + (d / "run" / "checkpoint.genet").string() + "\" --json \"" +
                             (d / "eval.json").string() + "\"",
                    d / "eval.out");
    rc |= run_genet(env, "stats --n 4 --rho 0.25 --trials 200000 --workers " +
                             std::string(k == 0 ? "1" : "4") + " --out \"" +
                             (d / "stats.csv").string() + "\"",
                    d / "stats.out");
    if (rc != 0) return {false, "a command exited non-zero"};
  }
  for (const auto& entry : fs::recursive_directory_iterator(runs[0])) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), runs[0]);
    ++compared;
    std::string a = read_text(entry.path()), b = read_text(runs[1] / rel);
    // Output paths are the only thing allowed to differ between the runs.
    for (auto* s : {&a, &b}) {
      for (int k = 0; k < 2; ++k) {
        const std::string p = runs[k].string();
        for (auto pos = s->find(p); pos != std::string::npos; pos = s->find(p))
          s->replace(pos, p.size(), "<dir>");
      }
    }
    if (a != b) diffs.push_back(rel.string());
  }
  std::string detail = std::to_string(compared) + " artifacts compared (train, eval, stats)";
  for (const auto& d : diffs) detail += ", differs: " + d;
  return {diffs.empty() && compared >= 8, detail};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  Env env{GENET_SOURCE_DIR, GENET_CLI_PATH, fs::temp_directory_path() / "genet_acceptance"};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const bool has_value = i + 1 < argc;
    if (a == "--only" && has_value) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (a == "--source-dir" && has_value) {
      env.source_dir = argv[++i];
    } else if (a == "--genet" && has_value) {
      env.genet_exe = argv[++i];
    } else if (a == "--work-dir" && has_value) {
      env.work_dir = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--source-dir DIR] [--genet PATH] "
                   "[--work-dir DIR]\n";
      return 2;
    }
  }
  fs::create_directories(env.work_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"grouped-conv oracle", grouped_conv_oracle},
      {"weighted loss exactness", weighted_loss_exactness},
      {"wagging sigma=0 equals averaging", wagging_zero_sigma},
      {"boosting weight bounds", boosting_bounds},
      {"ensemble variance", mc_variance},
      {"accuracy consistency", mc_accuracy},
      {"head isolation", head_isolation},
      {"parameter accounting", parameter_accounting},
      {"training direction", [&] { return training_direction(env); }},
      {"logit vs probability combination", [&] { return logit_vs_probability(env); }},
      {"determinism", [&] { return determinism(env); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
