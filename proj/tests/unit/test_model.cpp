#include "doctest.h"
#include "genet/error.hpp"
#include "genet/model.hpp"
#include "genet/ops.hpp"
#include "isolation.hpp"
#include "oracles.hpp"

using namespace genet;

namespace {

GENetConfig tiny_gray(std::size_t groups) {
  GENetConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 8;
  cfg.stage_channels = {8, 16, 16};
  cfg.num_groups = groups;
  return cfg;
}

}  // namespace

TEST_CASE("parameter counts of a hand-counted tiny model") {
  // stem 1->8 3x3 (72) + BN (16); stage-1 block two 8->8 3x3 convs with BN:
  // 2 * (576 + 16). Shared = 88 + 1184 = 1272.
  // n=2, width 8 per member. Stage-2 fan-out block: conv 8->16 (1152) + BN 32,
  // grouped conv 16->16 g=2 (1152) + BN 32, 1x1 shortcut 8->16 (128) + BN 32.
  // Stage-3 block: the same with a grouped 1x1 shortcut (128). Grouped = 5056.
  // Heads: 2 * (8 * 10 + 10) = 180.
  const ParamCounts p = count_params(tiny_gray(2));
  CHECK(p.shared == 1272);
  CHECK(p.grouped == 5056);
  CHECK(p.heads == 180);
  CHECK(p.total == 6508);

  Rng rng(0);
  GENetModel model(tiny_gray(2), rng);
  const ParamCounts live = model.count_params();
  CHECK(live.total == p.total);
  std::size_t sum = 0;
  for (const auto& np : model.parameters()) sum += np.tensor.numel();
  CHECK(sum == p.total);
}

TEST_CASE("ResNet-29 bottleneck preset is about 5M parameters") {
  const auto p = count_params(GENetConfig::resnet29(100));
  CHECK(p.total == 5006500);
  CHECK(p.total > 4500000);
  CHECK(p.total < 5500000);
}

TEST_CASE("forward shapes and shared-base evaluation count") {
  Rng rng(1);
  for (auto split : {SplitLayer::kConv2, SplitLayer::kConv3, SplitLayer::kConv4, SplitLayer::kFc}) {
    auto cfg = tiny_gray(3);
    cfg.stage_channels = {12, 12, 24};
    cfg.split_layer = split;
    GENetModel model(cfg, rng);
    auto x = oracle::random_tensor<float>({4, 1, 8, 8}, rng);
    auto y = model.forward(x, Mode::kEval);
    CHECK(y.shape() == Shape{3, 4, 10});
    CHECK(model.shared_base_evaluations() == 1);
    model.forward(x, Mode::kTrain);
    CHECK(model.shared_base_evaluations() == 2);
  }
}

TEST_CASE("bottleneck blocks build and run") {
  Rng rng(4);
  auto cfg = tiny_gray(2);
  cfg.block_kind = BlockKind::kBottleneck;
  cfg.stage_channels = {4, 8, 8};
  GENetModel model(cfg, rng);
  auto y = model.forward(oracle::random_tensor<float>({2, 1, 8, 8}, rng), Mode::kTrain);
  CHECK(y.shape() == Shape{2, 2, 10});
  CHECK(model.count_params().total == count_params(cfg).total);
}

TEST_CASE("head isolation for every split and head") {
  Rng rng(2);
  for (auto split : {SplitLayer::kConv2, SplitLayer::kConv3, SplitLayer::kConv4, SplitLayer::kFc}) {
    auto cfg = tiny_gray(4);
    cfg.split_layer = split;
    GENetModelD model(cfg, rng);
    auto x = oracle::random_tensor<double>({3, 1, 8, 8}, rng);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto r = oracle::head_isolation(model, x, j);
      CHECK(r.leaks.empty());
      CHECK(r.missing.empty());
    }
  }
}

TEST_CASE("identical seeds give identical weights") {
  Rng a(7), b(7), c(8);
  GENetModel m1(tiny_gray(2), a), m2(tiny_gray(2), b), m3(tiny_gray(2), c);
  const auto s1 = m1.state(), s2 = m2.state(), s3 = m3.state();
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    all_same = all_same && s1[i].second.to_vector() == s2[i].second.to_vector();
    any_diff = any_diff || s1[i].second.to_vector() != s3[i].second.to_vector();
  }
  CHECK(all_same);
  CHECK(any_diff);
}

TEST_CASE("load_state round trip and mismatches") {
  Rng rng(3);
  GENetModel src(tiny_gray(2), rng), dst(tiny_gray(2), rng);
  auto state = src.state();
  dst.load_state(state);
  auto x = oracle::random_tensor<float>({2, 1, 8, 8}, rng);
  CHECK(src.forward(x, Mode::kEval).to_vector() == dst.forward(x, Mode::kEval).to_vector());

  auto missing = state;
  missing.pop_back();
  CHECK_THROWS_AS(dst.load_state(missing), Error);
  GENetModel other(tiny_gray(3), rng);
  CHECK_THROWS_AS(other.load_state(state), Error);
}

TEST_CASE("channel matching") {
  const auto grid = channel_match_grid();
  CHECK(grid.size() == 97);
  CHECK(grid.front() == 1.0);
  CHECK(grid.back() == 4.0);

  const auto base = GENetConfig::resnet29(100);
  for (std::size_t n : {2u, 3u, 4u}) {
    const auto m = channel_match(base, n, SplitLayer::kConv3);
    CHECK(m.config.num_groups == n);
    CHECK(m.deviation <= 0.10);
    CHECK(m.matched_params == count_params(m.config).total);
  }
  const auto fc = channel_match(tiny_gray(1), 3, SplitLayer::kFc);
  CHECK(fc.deviation <= 0.10);
  try {
    channel_match(tiny_gray(1), 4, SplitLayer::kConv3, 1e-6);
    FAIL("expected kMatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMatch);
  }
  CHECK_THROWS_AS(channel_match(tiny_gray(2), 3, SplitLayer::kConv3), Error);
}

TEST_CASE("config validation and enum parsing") {
  auto cfg = tiny_gray(2);
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_gray(0);
  CHECK_THROWS_AS(count_params(cfg), Error);
  CHECK(parse_split_layer("Conv4") == SplitLayer::kConv4);
  CHECK(parse_split_layer("FC") == SplitLayer::kFc);
  CHECK(to_string(SplitLayer::kConv2) == "Conv2");
  CHECK(parse_block_kind("bottleneck") == BlockKind::kBottleneck);
  CHECK_THROWS_AS(parse_split_layer("Conv9"), Error);
}
