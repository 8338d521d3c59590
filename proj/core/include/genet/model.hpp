#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "genet/nn.hpp"
#include "genet/rng.hpp"
#include "genet/tensor.hpp"

namespace genet {

// First layer of the grouped region. Conv2/Conv3/Conv4 name the first block of
// stages 1/2/3; Fc splits only the prediction layer.
enum class SplitLayer { kConv2, kConv3, kConv4, kFc };
enum class BlockKind { kBasic, kBottleneck };
enum class Mode { kTrain, kEval };
enum class Region { kShared, kGrouped, kHead };

std::string_view to_string(SplitLayer split);
std::string_view to_string(BlockKind kind);
std::string_view to_string(Region region);
SplitLayer parse_split_layer(std::string_view text);
BlockKind parse_block_kind(std::string_view text);

struct GENetConfig {
  std::size_t in_channels = 3;
  std::size_t stem_channels = 16;
  std::array<std::size_t, 3> stage_blocks{1, 1, 1};
  // Output widths for basic blocks, bottleneck (pre-expansion) widths otherwise.
  std::array<std::size_t, 3> stage_channels{16, 32, 64};
  std::size_t num_classes = 10;
  std::size_t num_groups = 1;
  SplitLayer split_layer = SplitLayer::kConv3;
  BlockKind block_kind = BlockKind::kBasic;
  // Scales per-group widths of the grouped region; used for parameter matching.
  double head_width_multiplier = 1.0;

  void validate() const;
  bool operator==(const GENetConfig&) const = default;

  // Desk-scale presets.
  static GENetConfig tiny();
  static GENetConfig small();
  // ResNet-29 bottleneck with stage widths 64/128/256 (expansion 4).
  static GENetConfig resnet29(std::size_t num_classes = 100);
  // ResNet-56 bottleneck: 6 blocks per stage, widths 16/32/64.
  static GENetConfig resnet56(std::size_t num_classes = 100);
};

// Declarative layer list derived from a config; shared by the model builder
// and by parameter accounting.
struct ConvSpec {
  std::string name;
  std::size_t in = 0, out = 0, kernel = 1, stride = 1, padding = 0, groups = 1;
  Region region = Region::kShared;
  // Number of member slices along the output-channel axis (1 when shared).
  std::size_t slices = 1;

  std::size_t weight_count() const { return out * (in / groups) * kernel * kernel; }
};

struct BlockSpec {
  std::vector<ConvSpec> main;
  std::optional<ConvSpec> shortcut;
};

struct ArchitecturePlan {
  ConvSpec stem;
  std::vector<BlockSpec> blocks;
  std::size_t trunk_out = 0;
  std::size_t head_count = 1;
  std::size_t head_in = 0;
  std::size_t num_classes = 0;
  bool heads_share_features = true;
  std::size_t downsample = 4;  // total spatial stride of the trunk
};

ArchitecturePlan plan_architecture(const GENetConfig& cfg);

struct ParamCounts {
  std::size_t shared = 0;
  std::size_t grouped = 0;
  std::size_t heads = 0;
  std::size_t total = 0;
};

// Trainable parameter counts (conv weights, BN affine, linear heads) by region.
ParamCounts count_params(const GENetConfig& cfg);

template <typename T>
struct NamedParam {
  std::string name;
  BasicTensor<T> tensor;
  Region region = Region::kShared;
  std::size_t slices = 1;     // member slices along axis 0 (grouped region)
  std::size_t head = 0;       // owning head (head region)
  bool weight_decay = false;  // conv and linear weights only
};

// Shared-base / multi-head network. The stem and every block before the split
// layer use groups=1; blocks at and after it use groups=n. The first grouped
// block of an n>1 model fans the shared features out to all n members with
// full-input convolutions, so member k owns output-channel slice k of every
// grouped layer. Head m is a linear classifier on member m's pooled features
// (on the whole pooled vector for an FC split).
template <typename T>
class BasicGENetModel {
 public:
  BasicGENetModel(const GENetConfig& cfg, Rng& rng);

  const GENetConfig& config() const { return cfg_; }
  const ArchitecturePlan& plan() const { return plan_; }
  std::size_t num_heads() const { return heads_.size(); }

  // HeadLogits: [n, B, num_classes].
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);

  std::vector<NamedParam<T>> parameters() const;
  // Parameters plus BN running statistics, in a stable order.
  std::vector<std::pair<std::string, BasicTensor<T>>> state() const;
  void load_state(const std::vector<std::pair<std::string, BasicTensor<T>>>& tensors);

  ParamCounts count_params() const;

  // Number of times the shared stem has been evaluated.
  std::size_t shared_base_evaluations() const { return shared_evals_; }

 private:
  struct ConvBn {
    ConvSpec spec;
    Conv2dParams<T> conv;
    BatchNormParams<T> bn;
  };
  struct Block {
    std::vector<ConvBn> main;
    std::optional<ConvBn> shortcut;
  };
  struct Head {
    BasicTensor<T> weight;
    BasicTensor<T> bias;
  };

  ConvBn make_unit(const ConvSpec& spec, Rng& rng);
  BasicTensor<T> run_unit(ConvBn& unit, const BasicTensor<T>& x, bool training, bool activate);

  GENetConfig cfg_;
  ArchitecturePlan plan_;
  ConvBn stem_;
  std::vector<Block> blocks_;
  std::vector<Head> heads_;
  std::size_t shared_evals_ = 0;
};

using GENetModel = BasicGENetModel<float>;
using GENetModelD = BasicGENetModel<double>;

template <typename T>
BasicGENetModel<T> build_model(const GENetConfig& cfg, Rng& rng) {
  return BasicGENetModel<T>(cfg, rng);
}

// Plain single-head backbone of the same widths.
template <typename T>
BasicGENetModel<T> build_backbone(GENetConfig cfg, Rng& rng) {
  cfg.num_groups = 1;
  cfg.head_width_multiplier = 1.0;
  return BasicGENetModel<T>(cfg, rng);
}

struct ChannelMatchResult {
  GENetConfig config;
  std::size_t base_params = 0;
  std::size_t matched_params = 0;
  double deviation = 0.0;  // |matched - base| / base
};

// Grid of head-width multipliers searched by channel_match: 1 + k/32, k = 0..96.
std::vector<double> channel_match_grid();

// Picks the smallest multiplier on the grid whose parameter count is within
// `tolerance` (relative) of the n=1 base config. Throws kMatch with the best
// multiplier found when none qualifies.
ChannelMatchResult channel_match(const GENetConfig& base, std::size_t num_groups,
                                 SplitLayer split, double tolerance = 0.10);

}  // namespace genet
