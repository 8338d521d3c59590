#include <cstring>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "genet/checkpoint.hpp"
#include "genet/error.hpp"
#include "genet/ini.hpp"
#include "oracles.hpp"

using namespace genet;

TEST_CASE("INI parsing") {
  const auto doc = IniDocument::parse(
      "# comment\n[run]\nname = demo \nseed=3\n\n; other comment\n[model]\nstage_blocks = 1, 2,3\n",
      "demo.ini");
  CHECK(doc.get("run.name") == "demo");
  CHECK(doc.get("run.seed") == "3");
  CHECK(doc.line_of("model.stage_blocks") == 8);
  CHECK(split_list(doc.get("model.stage_blocks")) == std::vector<std::string>{"1", "2", "3"});
  CHECK(split_list("") .empty());
  CHECK(doc.get_or("run.missing", "x") == "x");
  CHECK_THROWS_AS(doc.get("run.missing"), Error);
  CHECK(trim("  a b \t") == "a b");
}

TEST_CASE("INI errors carry origin and line") {
  auto message = [](const char* text) {
    try {
      IniDocument::parse(text, "f.ini");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfig);
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("[a]\nx = 1\nx = 2\n") == "f.ini:3: duplicate key 'a.x'");
  CHECK(message("x = 1\n").find("f.ini:1:") == 0);
  CHECK(message("[a\n").find("unterminated") != std::string::npos);
  CHECK(message("[a]\nnovalue\n").find("f.ini:2:") == 0);
}

TEST_CASE("INI set and serialise round trip") {
  auto doc = IniDocument::parse("[a]\nx = 1\n[b]\ny = 2\n");
  doc.set("a.x", "5");
  doc.set("b.z", "hello");
  const auto again = IniDocument::parse(doc.to_string());
  CHECK(again.get("a.x") == "5");
  CHECK(again.get("b.z") == "hello");
  CHECK(again.get("b.y") == "2");
}

TEST_CASE("shortest round-trip doubles") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.59375) == "1.59375");
  CHECK(format_double(1.0) == "1");
  for (double v : {1.0 / 3.0, 1e-4, 6.02e23, -2.5e-300}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("model config round trip through INI") {
  GENetConfig cfg = GENetConfig::resnet29(100);
  cfg.num_groups = 3;
  cfg.split_layer = SplitLayer::kConv4;
  cfg.head_width_multiplier = 1.625;
  IniDocument doc;
  write_model_config(doc, cfg);
  CHECK(read_model_config(IniDocument::parse(doc.to_string())) == cfg);
}

TEST_CASE("checkpoint binary layout") {
  Checkpoint ckpt;
  ckpt.config_text = "[x]\na = 1\n";
  ckpt.tensors.emplace_back("w", Tensor({2}, {1.5f, -2.0f}));
  std::ostringstream out;
  write_checkpoint(out, ckpt);
  const std::string bytes = out.str();
  // magic(6) + len(4) + config(10) + count(4) + name len(4) + "w"(1) + rank(4)
  // + extent(4) + 2 floats(8)
  CHECK(bytes.size() == 45);
  CHECK(bytes.substr(0, 6) == "GENET1");
  CHECK(static_cast<unsigned char>(bytes[6]) == 10);
  float first = 0;
  std::memcpy(&first, bytes.data() + 37, 4);
  CHECK(first == 1.5f);

  std::istringstream in(bytes);
  const Checkpoint back = read_checkpoint(in);
  CHECK(back.config_text == ckpt.config_text);
  CHECK(back.tensors[0].first == "w");
  CHECK(back.tensors[0].second.to_vector() == std::vector<float>{1.5f, -2.0f});

  std::istringstream truncated(bytes.substr(0, 40));
  CHECK_THROWS_AS(read_checkpoint(truncated), Error);
  std::istringstream bad("GENET2" + bytes.substr(6));
  try {
    read_checkpoint(bad);
    FAIL("expected kFormat");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFormat);
  }
}

TEST_CASE("model survives a checkpoint round trip") {
  GENetConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 4;
  cfg.stage_channels = {4, 8, 8};
  cfg.num_groups = 2;
  Rng rng(5);
  GENetModel model(cfg, rng);
  auto x = oracle::random_tensor<float>({3, 1, 8, 8}, rng);
  model.forward(x, Mode::kTrain);  // move the BN running statistics
  IniDocument doc;
  write_model_config(doc, cfg);
  const auto path = (std::filesystem::temp_directory_path() / "genet_ckpt_test.genet").string();
  save_checkpoint(path, make_checkpoint(model, doc.to_string()));
  GENetModel restored = model_from_checkpoint(load_checkpoint(path));
  CHECK(restored.config() == cfg);
  CHECK(restored.forward(x, Mode::kEval).to_vector() == model.forward(x, Mode::kEval).to_vector());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}
