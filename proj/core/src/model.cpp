#include "genet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "genet/error.hpp"
#include "genet/ops.hpp"

namespace genet {

std::string_view to_string(SplitLayer split) {
  switch (split) {
    case SplitLayer::kConv2: return "Conv2";
    case SplitLayer::kConv3: return "Conv3";
    case SplitLayer::kConv4: return "Conv4";
    case SplitLayer::kFc: return "FC";
  }
  return "?";
}

std::string_view to_string(BlockKind kind) {
  return kind == BlockKind::kBasic ? "basic" : "bottleneck";
}

std::string_view to_string(Region region) {
  switch (region) {
    case Region::kShared: return "shared";
    case Region::kGrouped: return "grouped";
    case Region::kHead: return "head";
  }
  return "?";
}

SplitLayer parse_split_layer(std::string_view text) {
  if (text == "Conv2") return SplitLayer::kConv2;
  if (text == "Conv3") return SplitLayer::kConv3;
  if (text == "Conv4") return SplitLayer::kConv4;
  if (text == "FC") return SplitLayer::kFc;
  fail(ErrorCode::kConfig, "unknown split layer '" + std::string(text) +
                               "' (expected Conv2, Conv3, Conv4 or FC)");
}

BlockKind parse_block_kind(std::string_view text) {
  if (text == "basic") return BlockKind::kBasic;
  if (text == "bottleneck") return BlockKind::kBottleneck;
  fail(ErrorCode::kConfig, "unknown block kind '" + std::string(text) +
                               "' (expected basic or bottleneck)");
}

void GENetConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfig, what); };
  if (in_channels == 0) bad("in_channels must be positive");
  if (stem_channels == 0) bad("stem_channels must be positive");
  if (num_classes < 2) bad("num_classes must be at least 2");
  if (num_groups == 0) bad("num_groups must be at least 1");
  for (std::size_t s = 0; s < 3; ++s) {
    if (stage_blocks[s] == 0) bad("every stage needs at least one block");
    if (stage_channels[s] == 0) bad("stage channels must be positive");
  }
  if (!(head_width_multiplier > 0.0) || !std::isfinite(head_width_multiplier)) {
    bad("head_width_multiplier must be positive");
  }
}

GENetConfig GENetConfig::tiny() { return GENetConfig{}; }

GENetConfig GENetConfig::small() {
  GENetConfig cfg;
  cfg.stage_blocks = {3, 3, 3};
  return cfg;
}

GENetConfig GENetConfig::resnet29(std::size_t num_classes) {
  GENetConfig cfg;
  cfg.stem_channels = 64;
  cfg.stage_blocks = {3, 3, 3};
  cfg.stage_channels = {64, 128, 256};
  cfg.block_kind = BlockKind::kBottleneck;
  cfg.num_classes = num_classes;
  return cfg;
}

GENetConfig GENetConfig::resnet56(std::size_t num_classes) {
  GENetConfig cfg;
  cfg.stem_channels = 16;
  cfg.stage_blocks = {6, 6, 6};
  cfg.stage_channels = {16, 32, 64};
  cfg.block_kind = BlockKind::kBottleneck;
  cfg.num_classes = num_classes;
  return cfg;
}

ArchitecturePlan plan_architecture(const GENetConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_groups;
  const std::size_t split_index = [&]() -> std::size_t {
    switch (cfg.split_layer) {
      case SplitLayer::kConv2: return 0;
      case SplitLayer::kConv3: return cfg.stage_blocks[0];
      case SplitLayer::kConv4: return cfg.stage_blocks[0] + cfg.stage_blocks[1];
      case SplitLayer::kFc: break;
    }
    return cfg.stage_blocks[0] + cfg.stage_blocks[1] + cfg.stage_blocks[2];
  }();
  const std::size_t expansion = cfg.block_kind == BlockKind::kBasic ? 1 : 4;

  ArchitecturePlan plan;
  plan.num_classes = cfg.num_classes;
  plan.stem = ConvSpec{"stem", cfg.in_channels, cfg.stem_channels, 3, 1, 1, 1, Region::kShared, 1};

  std::size_t in = cfg.stem_channels;
  std::size_t index = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t b = 0; b < cfg.stage_blocks[s]; ++b, ++index) {
      const bool grouped = index >= split_index;
      const std::size_t g = grouped ? n : 1;
      const Region region = grouped ? Region::kGrouped : Region::kShared;
      const std::size_t slices = grouped ? n : 1;
      std::size_t mid = cfg.stage_channels[s];
      if (grouped) {
        const auto per_group = std::lround(static_cast<double>(mid) * cfg.head_width_multiplier /
                                           static_cast<double>(n));
        mid = n * static_cast<std::size_t>(std::max(1L, per_group));
      }
      const std::size_t out = mid * expansion;
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      // The first grouped block reads the undivided shared features.
      const bool entry = grouped && index == split_index && n > 1;
      const std::size_t entry_groups = entry ? 1 : g;
      const std::string prefix = "block" + std::to_string(index);

      BlockSpec block;
      if (cfg.block_kind == BlockKind::kBasic) {
        block.main.push_back({prefix + ".conv1", in, mid, 3, stride, 1, entry_groups, region, slices});
        block.main.push_back({prefix + ".conv2", mid, out, 3, 1, 1, g, region, slices});
      } else {
        block.main.push_back({prefix + ".conv1", in, mid, 1, 1, 0, entry_groups, region, slices});
        block.main.push_back({prefix + ".conv2", mid, mid, 3, stride, 1, g, region, slices});
        block.main.push_back({prefix + ".conv3", mid, out, 1, 1, 0, g, region, slices});
      }
      if (stride != 1 || in != out || entry) {
        block.shortcut =
            ConvSpec{prefix + ".shortcut", in, out, 1, stride, 0, entry_groups, region, slices};
      }
      plan.blocks.push_back(std::move(block));
      in = out;
    }
  }
  plan.trunk_out = in;
  plan.head_count = n;
  plan.heads_share_features = cfg.split_layer == SplitLayer::kFc || n == 1;
  plan.head_in = plan.heads_share_features ? in : in / n;
  return plan;
}

ParamCounts count_params(const GENetConfig& cfg) {
  const ArchitecturePlan plan = plan_architecture(cfg);
  ParamCounts counts;
  auto add_conv = [&](const ConvSpec& spec) {
    const std::size_t c = spec.weight_count() + 2 * spec.out;  // conv + BN affine
    (spec.region == Region::kShared ? counts.shared : counts.grouped) += c;
  };
  add_conv(plan.stem);
  for (const auto& block : plan.blocks) {
    for (const auto& spec : block.main) add_conv(spec);
    if (block.shortcut) add_conv(*block.shortcut);
  }
  counts.heads = plan.head_count * (plan.head_in * plan.num_classes + plan.num_classes);
  counts.total = counts.shared + counts.grouped + counts.heads;
  return counts;
}

template <typename T>
BasicGENetModel<T>::BasicGENetModel(const GENetConfig& cfg, Rng& rng)
    : cfg_(cfg), plan_(plan_architecture(cfg)), stem_(make_unit(plan_.stem, rng)) {
  for (const auto& spec : plan_.blocks) {
    Block block;
    for (const auto& conv : spec.main) block.main.push_back(make_unit(conv, rng));
    if (spec.shortcut) block.shortcut = make_unit(*spec.shortcut, rng);
    blocks_.push_back(std::move(block));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(plan_.head_in));
  for (std::size_t m = 0; m < plan_.head_count; ++m) {
    std::vector<T> w(plan_.head_in * plan_.num_classes);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    heads_.push_back(Head{BasicTensor<T>({plan_.head_in, plan_.num_classes}, std::move(w), true),
                          BasicTensor<T>::zeros({plan_.num_classes}, true)});
  }
}

template <typename T>
typename BasicGENetModel<T>::ConvBn BasicGENetModel<T>::make_unit(const ConvSpec& spec, Rng& rng) {
  return ConvBn{spec,
                make_conv<T>(spec.in, spec.out, spec.kernel,
                             Conv2dOptions{spec.stride, spec.padding, spec.groups}, rng),
                BatchNormParams<T>(spec.out)};
}

template <typename T>
BasicTensor<T> BasicGENetModel<T>::run_unit(ConvBn& unit, const BasicTensor<T>& x, bool training,
                                            bool activate) {
  BasicTensor<T> y = unit.bn(unit.conv(x), training);
  return activate ? relu(y) : y;
}

template <typename T>
BasicTensor<T> BasicGENetModel<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != cfg_.in_channels) {
    fail(ErrorCode::kShape, "model input must be [B," + std::to_string(cfg_.in_channels) +
                                ",H,W], got " + shape_str(x.shape()));
  }
  const bool training = mode == Mode::kTrain;
  BasicTensor<T> h = run_unit(stem_, x, training, true);
  ++shared_evals_;
  for (auto& block : blocks_) {
    BasicTensor<T> y = h;
    for (std::size_t i = 0; i < block.main.size(); ++i) {
      y = run_unit(block.main[i], y, training, i + 1 < block.main.size());
    }
    BasicTensor<T> skip = block.shortcut ? run_unit(*block.shortcut, h, training, false) : h;
    h = relu(add(y, skip));
  }
  const BasicTensor<T> pooled = global_avg_pool(h);
  std::vector<BasicTensor<T>> logits;
  logits.reserve(heads_.size());
  for (std::size_t m = 0; m < heads_.size(); ++m) {
    const BasicTensor<T> features =
        plan_.heads_share_features ? pooled : narrow(pooled, 1, m * plan_.head_in, plan_.head_in);
    logits.push_back(linear(features, heads_[m].weight, heads_[m].bias));
  }
  return stack(logits);
}

template <typename T>
std::vector<NamedParam<T>> BasicGENetModel<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  auto add_unit = [&](const ConvBn& u) {
    out.push_back({u.spec.name + ".weight", u.conv.weight, u.spec.region, u.spec.slices, 0, true});
    out.push_back({u.spec.name + ".bn.gamma", u.bn.gamma, u.spec.region, u.spec.slices, 0, false});
    out.push_back({u.spec.name + ".bn.beta", u.bn.beta, u.spec.region, u.spec.slices, 0, false});
  };
  add_unit(stem_);
  for (const auto& block : blocks_) {
    for (const auto& u : block.main) add_unit(u);
    if (block.shortcut) add_unit(*block.shortcut);
  }
  for (std::size_t m = 0; m < heads_.size(); ++m) {
    const std::string prefix = "head" + std::to_string(m);
    out.push_back({prefix + ".weight", heads_[m].weight, Region::kHead, 1, m, true});
    out.push_back({prefix + ".bias", heads_[m].bias, Region::kHead, 1, m, false});
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> BasicGENetModel<T>::state() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  auto add_unit = [&](const ConvBn& u) {
    out.emplace_back(u.spec.name + ".weight", u.conv.weight);
    out.emplace_back(u.spec.name + ".bn.gamma", u.bn.gamma);
    out.emplace_back(u.spec.name + ".bn.beta", u.bn.beta);
    out.emplace_back(u.spec.name + ".bn.running_mean", u.bn.running_mean);
    out.emplace_back(u.spec.name + ".bn.running_var", u.bn.running_var);
  };
  add_unit(stem_);
  for (const auto& block : blocks_) {
    for (const auto& u : block.main) add_unit(u);
    if (block.shortcut) add_unit(*block.shortcut);
  }
  for (std::size_t m = 0; m < heads_.size(); ++m) {
    const std::string prefix = "head" + std::to_string(m);
    out.emplace_back(prefix + ".weight", heads_[m].weight);
    out.emplace_back(prefix + ".bias", heads_[m].bias);
  }
  return out;
}

template <typename T>
void BasicGENetModel<T>::load_state(
    const std::vector<std::pair<std::string, BasicTensor<T>>>& tensors) {
  std::map<std::string, const BasicTensor<T>*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  for (auto& [name, target] : state()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorCode::kFormat, "checkpoint is missing tensor '" + name + "'");
    if (it->second->shape() != target.shape()) {
      fail(ErrorCode::kFormat, "checkpoint tensor '" + name + "' has shape " +
                                   shape_str(it->second->shape()) + ", model expects " +
                                   shape_str(target.shape()));
    }
    auto dst = target.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
  }
  if (by_name.size() != state().size()) {
    fail(ErrorCode::kFormat, "checkpoint holds " + std::to_string(by_name.size()) +
                                 " tensors, model has " + std::to_string(state().size()));
  }
}

template <typename T>
ParamCounts BasicGENetModel<T>::count_params() const {
  ParamCounts counts;
  for (const auto& p : parameters()) {
    switch (p.region) {
      case Region::kShared: counts.shared += p.tensor.numel(); break;
      case Region::kGrouped: counts.grouped += p.tensor.numel(); break;
      case Region::kHead: counts.heads += p.tensor.numel(); break;
    }
  }
  counts.total = counts.shared + counts.grouped + counts.heads;
  return counts;
}

std::vector<double> channel_match_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 96; ++k) grid.push_back(1.0 + k / 32.0);
  return grid;
}

ChannelMatchResult channel_match(const GENetConfig& base, std::size_t num_groups,
                                 SplitLayer split, double tolerance) {
  if (base.num_groups != 1) {
    fail(ErrorCode::kArgument, "channel_match needs an n=1 base config");
  }
  if (num_groups == 0) fail(ErrorCode::kArgument, "channel_match needs n >= 1");
  ChannelMatchResult result;
  result.base_params = count_params(base).total;
  if (num_groups == 1) {
    result.config = base;
    result.config.split_layer = split;
    result.matched_params = count_params(result.config).total;
    result.deviation = std::abs(static_cast<double>(result.matched_params) -
                                static_cast<double>(result.base_params)) /
                       static_cast<double>(result.base_params);
    return result;
  }
  double best_dev = std::numeric_limits<double>::infinity();
  double best_mult = 1.0;
  for (double mult : channel_match_grid()) {
    GENetConfig candidate = base;
    candidate.num_groups = num_groups;
    candidate.split_layer = split;
    candidate.head_width_multiplier = mult;
    const std::size_t params = count_params(candidate).total;
    const double dev = std::abs(static_cast<double>(params) -
                                static_cast<double>(result.base_params)) /
                       static_cast<double>(result.base_params);
    if (dev <= tolerance) {
      result.config = candidate;
      result.matched_params = params;
      result.deviation = dev;
      return result;
    }
    if (dev < best_dev) {
      best_dev = dev;
      best_mult = mult;
    }
  }
  fail(ErrorCode::kMatch, "no head_width_multiplier within tolerance " + std::to_string(tolerance) +
                              "; best multiplier " + std::to_string(best_mult) + " deviates by " +
                              std::to_string(best_dev));
}

template class BasicGENetModel<float>;
template class BasicGENetModel<double>;

}  // namespace genet
