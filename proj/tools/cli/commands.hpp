#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "genet/stats.hpp"

namespace genet::cli {

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;  // overrides run.output_dir when set
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string config;  // optional: data settings from here instead of the checkpoint
  std::vector<std::string> overrides;
  std::string mode = "both";  // logit | probability | both
  std::string split = "val";
  std::string json_out;
};

struct ParamsArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> match;
  double tolerance = 0.10;
};

struct StatsArgs {
  StatsConfig stats;
  std::string out;
  unsigned workers = 0;
};

// Each command writes its report to `out`, progress to `log`, and returns the
// process exit status. Failures surface as genet::Error.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& log);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_gradcheck(const std::string& scope, std::uint64_t seed, std::ostream& out);
int cmd_stats(const StatsArgs& args, std::ostream& out);
int cmd_params(const ParamsArgs& args, std::ostream& out);
int cmd_config(const std::string& config, const std::vector<std::string>& overrides,
               std::ostream& out);

}  // namespace genet::cli
