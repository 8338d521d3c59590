#include "run_config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "genet/checkpoint.hpp"
#include "genet/error.hpp"

namespace genet::cli {

namespace {

[[noreturn]] void bad_value(const std::string& expected, const std::string& text) {
  throw std::invalid_argument("expected " + expected + ", got '" + text + "'");
}

std::uint64_t to_u64(const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    bad_value("a non-negative integer", text);
  }
  return v;
}

std::size_t to_size(const std::string& text) { return static_cast<std::size_t>(to_u64(text)); }

double to_double(const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    bad_value("a number", text);
  }
  return v;
}

bool to_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  bad_value("true or false", text);
}

std::vector<std::size_t> to_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) out.push_back(to_size(item));
  return out;
}

std::array<std::size_t, 3> to_triple(const std::string& text) {
  const auto v = to_size_list(text);
  if (v.size() != 3) bad_value("three comma-separated integers", text);
  return {v[0], v[1], v[2]};
}

template <typename Seq>
std::string join(const Seq& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_same_v<std::decay_t<decltype(item)>, std::string>) {
      out += item;
    } else {
      out += std::to_string(item);
    }
  }
  return out;
}

std::string from_bool(bool v) { return v ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GENET_FIELD(KEY, MEMBER, PARSE, FORMAT)                                        \
  Field {                                                                              \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = PARSE(v); },              \
        [](const RunConfig& c) { return std::string(FORMAT(c.MEMBER)); }              \
  }

std::string size_str(std::size_t v) { return std::to_string(v); }
std::string u64_str(std::uint64_t v) { return std::to_string(v); }
std::string ident(const std::string& v) { return v; }
std::string str_of_combination(CombinationMode m) { return std::string(to_string(m)); }
std::string str_of_split(SplitLayer s) { return std::string(to_string(s)); }
std::string str_of_block(BlockKind b) { return std::string(to_string(b)); }
std::string str_of_strategy(StrategyKind k) { return std::string(to_string(k)); }
std::string str_of_augment(AugmentPolicy p) { return std::string(to_string(p)); }
std::string str_of_triple(const std::array<std::size_t, 3>& t) { return join(t); }
std::string str_of_list(const std::vector<std::size_t>& v) { return join(v); }
std::string str_of_paths(const std::vector<std::string>& v) { return join(v); }
std::vector<std::string> to_paths(const std::string& text) { return split_list(text); }

Shape to_shape(const std::string& text) {
  const auto v = to_size_list(text);
  if (v.size() != 3) bad_value("C,H,W", text);
  return Shape(v.begin(), v.end());
}
std::string str_of_shape(const Shape& s) { return join(s); }

CombinationMode to_combination(const std::string& v) { return parse_combination_mode(v); }
SplitLayer to_split(const std::string& v) { return parse_split_layer(v); }
BlockKind to_block(const std::string& v) { return parse_block_kind(v); }
StrategyKind to_strategy(const std::string& v) { return parse_strategy_kind(v); }
AugmentPolicy to_augment(const std::string& v) { return parse_augment_policy(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GENET_FIELD("run.name", name, ident, ident),
      GENET_FIELD("run.seed", seed, to_u64, u64_str),
      GENET_FIELD("run.output_dir", output_dir, ident, ident),
      GENET_FIELD("run.combination", combination, to_combination, str_of_combination),
      GENET_FIELD("run.desk_runnable", desk_runnable, to_bool, from_bool),
      GENET_FIELD("model.in_channels", model.in_channels, to_size, size_str),
      GENET_FIELD("model.stem_channels", model.stem_channels, to_size, size_str),
      GENET_FIELD("model.stage_blocks", model.stage_blocks, to_triple, str_of_triple),
      GENET_FIELD("model.stage_channels", model.stage_channels, to_triple, str_of_triple),
      GENET_FIELD("model.num_classes", model.num_classes, to_size, size_str),
      GENET_FIELD("model.num_groups", model.num_groups, to_size, size_str),
      GENET_FIELD("model.split_layer", model.split_layer, to_split, str_of_split),
      GENET_FIELD("model.block_kind", model.block_kind, to_block, str_of_block),
      GENET_FIELD("model.head_width_multiplier", model.head_width_multiplier, to_double, format_double),
      GENET_FIELD("model.match_params", match_params, to_bool, from_bool),
      GENET_FIELD("model.match_tolerance", match_tolerance, to_double, format_double),
      GENET_FIELD("strategy.kind", strategy.kind, to_strategy, str_of_strategy),
      GENET_FIELD("strategy.sigma", strategy.sigma, to_double, format_double),
      GENET_FIELD("strategy.temperature", strategy.temperature, to_double, format_double),
      GENET_FIELD("optimizer.learning_rate", optimizer.learning_rate, to_double, format_double),
      GENET_FIELD("optimizer.momentum", optimizer.momentum, to_double, format_double),
      GENET_FIELD("optimizer.weight_decay", optimizer.weight_decay, to_double, format_double),
      GENET_FIELD("optimizer.nesterov", optimizer.nesterov, to_bool, from_bool),
      GENET_FIELD("schedule.total_epochs", schedule.total_epochs, to_size, size_str),
      GENET_FIELD("schedule.milestones", schedule.milestones, to_size_list, str_of_list),
      GENET_FIELD("schedule.gamma", schedule.gamma, to_double, format_double),
      GENET_FIELD("schedule.warmup_epochs", schedule.warmup_epochs, to_size, size_str),
      GENET_FIELD("train.batch_size", batch_size, to_size, size_str),
      GENET_FIELD("train.drop_last", drop_last, to_bool, from_bool),
      GENET_FIELD("train.eval_batch_size", eval_batch_size, to_size, size_str),
      GENET_FIELD("data.source", data.source, ident, ident),
      GENET_FIELD("data.root", data.root, ident, ident),
      GENET_FIELD("data.train_images", data.train_images, ident, ident),
      GENET_FIELD("data.train_labels", data.train_labels, ident, ident),
      GENET_FIELD("data.val_images", data.val_images, ident, ident),
      GENET_FIELD("data.val_labels", data.val_labels, ident, ident),
      GENET_FIELD("data.train_files", data.train_files, to_paths, str_of_paths),
      GENET_FIELD("data.val_files", data.val_files, to_paths, str_of_paths),
      GENET_FIELD("data.augment", data.augment, to_augment, str_of_augment),
      GENET_FIELD("data.limit_train", data.limit_train, to_size, size_str),
      GENET_FIELD("data.limit_val", data.limit_val, to_size, size_str),
      GENET_FIELD("data.synth_per_class", data.synth.per_class, to_size, size_str),
      GENET_FIELD("data.synth_val_per_class", data.synth.val_per_class, to_size, size_str),
      GENET_FIELD("data.synth_shape", data.synth.image_shape, to_shape, str_of_shape),
      GENET_FIELD("data.synth_separation", data.synth.separation, to_double, format_double),
      GENET_FIELD("data.synth_seed", data.synth.seed, to_u64, u64_str),
  };
  return table;
}

#undef GENET_FIELD

std::string location(const IniDocument& doc, const std::string& key) {
  const std::size_t line = doc.line_of(key);
  if (line == 0) return "--set " + key;
  return doc.origin() + ":" + std::to_string(line);
}

constexpr std::string_view kTinySynth = R"(# Separable Gaussian blobs, two-head tiny GENet; runs in seconds.
[run]
name = tiny_synth
seed = 0
output_dir = runs/tiny_synth

[model]
in_channels = 1
stem_channels = 8
stage_channels = 8,16,16
num_classes = 10
num_groups = 2
split_layer = Conv3

[strategy]
kind = Averaging

[optimizer]
learning_rate = 0.05
weight_decay = 0.0001

[schedule]
total_epochs = 10
milestones =

[train]
batch_size = 32

[data]
source = synth
synth_per_class = 50
synth_val_per_class = 20
synth_shape = 1,8,8
synth_separation = 10
)";

constexpr std::string_view kMnistSmall = R"(# 5,000-image MNIST subset (tools/fetch_mnist_5k.py); three-head GENet split
# at Conv3, parameter-matched to the single-head backbone.
[run]
name = mnist_small
seed = 0
output_dir = runs/mnist_small

[model]
in_channels = 1
stem_channels = 8
stage_channels = 8,16,32
num_classes = 10
num_groups = 3
split_layer = Conv3
match_params = true

[strategy]
kind = Averaging

[optimizer]
learning_rate = 0.1
momentum = 0.9
weight_decay = 0.0001

[schedule]
total_epochs = 30
milestones = 15,25
gamma = 0.1

[train]
batch_size = 128

[data]
source = idx
train_images = data/mnist5k/train-images-idx3-ubyte
train_labels = data/mnist5k/train-labels-idx1-ubyte
val_images = data/mnist5k/val-images-idx3-ubyte
val_labels = data/mnist5k/val-labels-idx1-ubyte
)";

constexpr std::string_view kCifarSubset = R"(# 5,000 CIFAR-10 training images from data_batch_1, 1,000 test images.
# Expects the binary release under data/cifar-10-batches-bin/.
[run]
name = cifar_subset
seed = 0
output_dir = runs/cifar_subset

[model]
in_channels = 3
stem_channels = 16
stage_channels = 16,32,64
num_classes = 10
num_groups = 3
split_layer = Conv3
match_params = true

[strategy]
kind = Averaging

[optimizer]
learning_rate = 0.1
weight_decay = 0.0001

[schedule]
total_epochs = 30
milestones = 15,25

[train]
batch_size = 128

[data]
source = cifar10
train_files = data/cifar-10-batches-bin/data_batch_1.bin
val_files = data/cifar-10-batches-bin/test_batch.bin
augment = crop_flip
limit_train = 5000
limit_val = 1000
)";

constexpr std::string_view kResnet56 = R"(# CIFAR-100 ResNet-56 recipe: three groups split at Conv3, parameters
# matched to the single model. 300 epochs, batch 128, lr 0.25 decayed by 0.1
# at epochs 180 and 240, weight decay 0.0001.
[run]
name = cifar_resnet56_g3_conv3
output_dir = runs/cifar_resnet56_g3_conv3

[model]
in_channels = 3
stem_channels = 16
stage_blocks = 6,6,6
stage_channels = 16,32,64
block_kind = bottleneck
num_classes = 100
num_groups = 3
split_layer = Conv3
match_params = true

[strategy]
kind = Averaging

[optimizer]
learning_rate = 0.25
momentum = 0.9
weight_decay = 0.0001

[schedule]
total_epochs = 300
milestones = 180,240
gamma = 0.1

[train]
batch_size = 128

[data]
source = cifar100
train_files = data/cifar-100-binary/train.bin
val_files = data/cifar-100-binary/test.bin
augment = crop_flip
)";

constexpr std::string_view kResnet29 = R"(# CIFAR-100 ResNet-29 bottleneck backbone with filter channels 64, 128, 256
# (about 5M parameters). Same schedule as the ResNet-56 recipe.
[run]
name = cifar_resnet29
output_dir = runs/cifar_resnet29

[model]
in_channels = 3
stem_channels = 64
stage_blocks = 3,3,3
stage_channels = 64,128,256
block_kind = bottleneck
num_classes = 100
num_groups = 1
split_layer = Conv3

[strategy]
kind = Averaging

[optimizer]
learning_rate = 0.25
weight_decay = 0.0001

[schedule]
total_epochs = 300
milestones = 180,240

[train]
batch_size = 128

[data]
source = cifar100
train_files = data/cifar-100-binary/train.bin
val_files = data/cifar-100-binary/test.bin
augment = crop_flip
)";

constexpr std::string_view kImagenet = R"(# ImageNet recipe, recorded for reference only: batch 512, lr 0.2 with
# warm-up, 300 epochs decayed by 0.1 at 90, 180 and 240. The CIFAR-style
# backbone here is not a ResNet-50, and no ImageNet loader exists, so this
# preset is refused by `train`.
[run]
name = imagenet
desk_runnable = false
output_dir = runs/imagenet

[model]
in_channels = 3
stem_channels = 64
stage_blocks = 3,4,6
stage_channels = 64,128,256
block_kind = bottleneck
num_classes = 1000
num_groups = 3
split_layer = Conv3
match_params = true

[strategy]
kind = Averaging

[optimizer]
learning_rate = 0.2
weight_decay = 0.0001

[schedule]
total_epochs = 300
milestones = 90,180,240
warmup_epochs = 5

[train]
batch_size = 512

[data]
source = synth
)";

struct Preset {
  std::string_view name;
  std::string_view text;
};

constexpr Preset kPresets[] = {
    {"tiny_synth", kTinySynth},
    {"mnist_small", kMnistSmall},
    {"cifar_subset", kCifarSubset},
    {"cifar_resnet56_g3_conv3", kResnet56},
    {"cifar_resnet29", kResnet29},
    {"imagenet", kImagenet},
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string resolve_path(const DataConfig& data, const std::string& path) {
  if (path.empty()) fail(ErrorCode::kConfig, "data path is empty for source " + data.source);
  const std::filesystem::path p(path);
  if (p.is_absolute() || data.root.empty()) return path;
  return (std::filesystem::path(data.root) / p).string();
}

}  // namespace

RunConfig parse_run_config(const IniDocument& doc) {
  RunConfig config;
  for (const auto& entry : doc.entries()) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const Field& f) { return entry.key == f.key; });
    if (it == table.end()) {
      fail(ErrorCode::kConfig, location(doc, entry.key) + ": unknown key '" + entry.key + "'");
    }
    try {
      it->set(config, entry.value);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, location(doc, entry.key) + ": " + entry.key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      fail(ErrorCode::kConfig, location(doc, entry.key) + ": " + entry.key + ": " + e.what());
    }
  }
  try {
    config.model.validate();
    config.strategy.validate();
    config.optimizer.validate();
    config.schedule.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, doc.origin() + ": " + e.what());
  }
  const auto& source = config.data.source;
  if (source != "idx" && source != "cifar10" && source != "cifar100" && source != "synth") {
    fail(ErrorCode::kConfig, doc.origin() + ": data.source must be idx, cifar10, cifar100 or synth, got '" +
                                 source + "'");
  }
  if (config.batch_size == 0 || config.eval_batch_size == 0) {
    fail(ErrorCode::kConfig, doc.origin() + ": batch sizes must be >= 1");
  }
  if (!(config.match_tolerance > 0.0)) {
    fail(ErrorCode::kConfig, doc.origin() + ": model.match_tolerance must be > 0");
  }
  return config;
}

IniDocument to_ini(const RunConfig& config) {
  IniDocument doc;
  for (const auto& f : fields()) doc.set(f.key, f.get(config));
  return doc;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  return names;
}

std::string_view preset_text(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p.text;
  }
  return {};
}

IniDocument load_config_document(const std::string& source,
                                 const std::vector<std::string>& overrides) {
  IniDocument doc;
  if (const auto text = preset_text(source); !text.empty()) {
    doc = IniDocument::parse(text, "preset:" + source);
  } else {
    if (!std::filesystem::exists(source)) {
      std::string known;
      for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
      fail(ErrorCode::kIo, "config '" + source + "' is neither a file nor a preset (" + known + ")");
    }
    doc = IniDocument::parse(read_text(source), source);
  }
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || item.find('.') > eq) {
      fail(ErrorCode::kConfig, "--set expects section.key=value, got '" + item + "'");
    }
    doc.set(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
  }
  return doc;
}

RunConfig load_run_config(const std::string& source, const std::vector<std::string>& overrides) {
  return parse_run_config(load_config_document(source, overrides));
}

RunConfig resolve(RunConfig config) {
  if (config.match_params) {
    GENetConfig base = config.model;
    base.num_groups = 1;
    base.head_width_multiplier = 1.0;
    const ChannelMatchResult match = channel_match(base, config.model.num_groups,
                                                   config.model.split_layer, config.match_tolerance);
    config.model = match.config;
    config.match_params = false;
  }
  return config;
}

DatasetPair load_data(const DataConfig& data, std::size_t num_classes) {
  DatasetPair pair;
  if (data.source == "idx") {
    pair.train = load_idx(resolve_path(data, data.train_images), resolve_path(data, data.train_labels),
                          num_classes);
    pair.val = load_idx(resolve_path(data, data.val_images), resolve_path(data, data.val_labels),
                        num_classes);
  } else if (data.source == "cifar10" || data.source == "cifar100") {
    const auto variant = data.source == "cifar10" ? CifarVariant::k10 : CifarVariant::k100;
    auto paths = [&](const std::vector<std::string>& files) {
      if (files.empty()) fail(ErrorCode::kConfig, "no files listed for source " + data.source);
      std::vector<std::string> out;
      for (const auto& f : files) out.push_back(resolve_path(data, f));
      return out;
    };
    pair.train = load_cifar_binary(paths(data.train_files), variant);
    pair.val = load_cifar_binary(paths(data.val_files), variant);
  } else {
    SynthSpec spec = data.synth;
    spec.num_classes = num_classes;
    pair = synth_blobs(spec);
  }
  if (pair.train.num_classes != num_classes) {
    fail(ErrorCode::kConfig, "data has " + std::to_string(pair.train.num_classes) +
                                 " classes, model.num_classes is " + std::to_string(num_classes));
  }
  pair.train.split = Split::kTrain;
  pair.val.split = Split::kVal;
  if (data.limit_train) pair.train = pair.train.head(data.limit_train);
  if (data.limit_val) pair.val = pair.val.head(data.limit_val);
  normalize(pair);
  return pair;
}

TrainOptions train_options(const RunConfig& config) {
  TrainOptions options;
  options.batch_size = config.batch_size;
  options.drop_last = config.drop_last;
  options.augment = config.data.augment;
  options.combination = config.combination;
  options.eval_batch_size = config.eval_batch_size;
  options.seed = config.seed;
  return options;
}

}  // namespace genet::cli
