#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "genet/error.hpp"
#include "run_config.hpp"

using namespace genet;
using namespace genet::cli;

namespace {

std::string error_of(const std::function<void()>& fn, ErrorCode expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("expected genet::Error");
  return {};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("every preset parses and snapshots stably") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const RunConfig cfg = load_run_config(name, {});
    CHECK(cfg.name == name);
    const std::string ini = to_ini(cfg).to_string();
    CHECK(to_ini(parse_run_config(IniDocument::parse(ini))).to_string() == ini);
  }
  CHECK_FALSE(load_run_config("imagenet", {}).desk_runnable);
  CHECK(preset_text("nope").empty());
}

TEST_CASE("overrides and unknown keys") {
  const RunConfig cfg = load_run_config("tiny_synth", {"run.seed=5", "model.num_groups = 4"});
  CHECK(cfg.seed == 5);
  CHECK(cfg.model.num_groups == 4);
  const auto msg = error_of([] { load_run_config("tiny_synth", {"model.colour=red"}); },
                            ErrorCode::kConfig);
  CHECK(msg.find("unknown key 'model.colour'") != std::string::npos);
  error_of([] { load_run_config("tiny_synth", {"model.num_groups"}); }, ErrorCode::kConfig);
  error_of([] { load_run_config("tiny_synth", {"model.num_groups=two"}); }, ErrorCode::kConfig);
  error_of([] { load_run_config("tiny_synth", {"model.split_layer=Conv7"}); }, ErrorCode::kConfig);
  error_of([] { load_run_config("/no/such/file.ini", {}); }, ErrorCode::kIo);

  const auto path = std::filesystem::temp_directory_path() / "genet_cli_bad.ini";
  std::ofstream(path) << "[run]\nname = x\n\n[model]\nwidth = 3\n";
  const auto file_msg = error_of([&] { load_run_config(path.string(), {}); }, ErrorCode::kConfig);
  CHECK(file_msg.find(path.string() + ":5") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("resolve applies parameter matching once") {
  const RunConfig cfg = load_run_config("mnist_small", {});
  CHECK(cfg.match_params);
  const RunConfig r = resolve(cfg);
  CHECK_FALSE(r.match_params);
  CHECK(r.model.head_width_multiplier == 1.59375);
  CHECK(resolve(r).model == r.model);
}

TEST_CASE("config, params and stats commands") {
  std::ostringstream out;
  cmd_config("tiny_synth", {"run.seed=2"}, out);
  CHECK(out.str().find("seed = 2") != std::string::npos);

  out.str("");
  ParamsArgs p;
  p.config = "tiny_synth";
  p.overrides = {"model.num_groups=1"};
  p.match = 3;
  cmd_params(p, out);
  CHECK(out.str().find("total=") != std::string::npos);
  CHECK(out.str().find("match n=3") != std::string::npos);

  out.str("");
  StatsArgs s;
  s.stats.num_trials = 5000;
  s.stats.bins = 5;
  cmd_stats(s, out);
  CHECK(out.str().rfind("bin_left,bin_right,count", 0) == 0);
  CHECK(out.str().find("analytic mean=0.6 variance=0.04") != std::string::npos);
  s.stats.n = 2;
  s.stats.rho = -1.5;
  error_of([&] { cmd_stats(s, out); }, ErrorCode::kNotPsd);
}

TEST_CASE("train then eval a tiny run") {
  const auto dir = std::filesystem::temp_directory_path() / "genet_cli_run";
  std::filesystem::remove_all(dir);
  TrainArgs t;
  t.config = "tiny_synth";
  t.overrides = {"schedule.total_epochs=2"};
  t.output_dir = dir.string();
  std::ostringstream out, log;
  CHECK(cmd_train(t, out, log) == 0);
  for (const char* f : {"metrics.csv", "config.ini", "checkpoint.genet", "summary.json"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(log.str().find("epoch 2/2") != std::string::npos);
  CHECK(read_text(dir / "summary.json").find("\"ensemble_err\"") != std::string::npos);
  CHECK(read_text(dir / "config.ini").find("total_epochs = 2") != std::string::npos);

  EvalArgs e;
  e.checkpoint = (dir / "checkpoint.genet").string();
  e.json_out = (dir / "eval.json").string();
  std::ostringstream eval_out;
  cmd_eval(e, eval_out);
  CHECK(eval_out.str().find("mode=logit") != std::string::npos);
  CHECK(eval_out.str().find("mode=probability") != std::string::npos);
  CHECK(eval_out.str().find("unanimous=") != std::string::npos);
  CHECK(read_text(dir / "eval.json").find("\"agreement\"") != std::string::npos);

  e.mode = "logit";
  e.json_out.clear();
  eval_out.str("");
  cmd_eval(e, eval_out);
  CHECK(eval_out.str().find("probability") == std::string::npos);

  e.split = "test";
  error_of([&] { cmd_eval(e, eval_out); }, ErrorCode::kArgument);
  std::filesystem::remove_all(dir);

  TrainArgs big;
  big.config = "imagenet";
  error_of([&] { cmd_train(big, out, log); }, ErrorCode::kConfig);
}

TEST_CASE("missing data files are IO errors") {
  TrainArgs t;
  t.config = "mnist_small";
  t.overrides = {"data.root=/nonexistent"};
  t.output_dir = (std::filesystem::temp_directory_path() / "genet_cli_nodata").string();
  std::ostringstream out, log;
  error_of([&] { cmd_train(t, out, log); }, ErrorCode::kIo);
}
