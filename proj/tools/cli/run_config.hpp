#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "genet/aggregation.hpp"
#include "genet/data.hpp"
#include "genet/ini.hpp"
#include "genet/model.hpp"
#include "genet/trainer.hpp"

namespace genet::cli {

struct DataConfig {
  std::string source = "synth";  // idx | cifar10 | cifar100 | synth
  std::string root;              // prefix for relative paths
  std::string train_images, train_labels, val_images, val_labels;  // idx
  std::vector<std::string> train_files, val_files;                 // cifar
  AugmentPolicy augment = AugmentPolicy::kNone;
  std::size_t limit_train = 0;  // 0 keeps every sample
  std::size_t limit_val = 0;
  SynthSpec synth;
};

struct RunConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  CombinationMode combination = CombinationMode::kLogit;
  // Presets that document full-scale recipes set this to false.
  bool desk_runnable = true;

  GENetConfig model;
  // When set, the head width multiplier is solved by channel_match against
  // the single-group model before training.
  bool match_params = false;
  double match_tolerance = 0.10;

  AggregationStrategy strategy;
  OptimizerConfig optimizer;
  Schedule schedule;
  std::size_t batch_size = 128;
  bool drop_last = false;
  std::size_t eval_batch_size = 256;
  DataConfig data;
};

// Builds a config from a parsed document. Every key must be known; errors name
// the offending key with its origin and line.
RunConfig parse_run_config(const IniDocument& doc);
// Full snapshot: every key, in a fixed order.
IniDocument to_ini(const RunConfig& config);

std::vector<std::string> preset_names();
// Built-in preset text, or empty when `name` is not a preset.
std::string_view preset_text(std::string_view name);

// `source` is a preset name or a file path. Overrides are "section.key=value".
IniDocument load_config_document(const std::string& source,
                                 const std::vector<std::string>& overrides);
RunConfig load_run_config(const std::string& source, const std::vector<std::string>& overrides);

// Applies match_params (setting the multiplier and clearing the flag) so the
// snapshot reproduces the run without re-solving.
RunConfig resolve(RunConfig config);

// Loads, truncates (limit_*) and normalizes both splits.
DatasetPair load_data(const DataConfig& data, std::size_t num_classes);

TrainOptions train_options(const RunConfig& config);

}  // namespace genet::cli
