#include "genet/checkpoint.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "genet/error.hpp"

namespace genet {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                  static_cast<char>((v >> 16) & 0xff),
                                  static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    fail(ErrorCode::kFormat, std::string("truncated checkpoint while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) fail(ErrorCode::kFormat, std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::size_t parse_size(const IniDocument& doc, const std::string& key, std::size_t fallback) {
  if (!doc.has(key)) return fallback;
  const std::string& text = doc.get(key);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(ErrorCode::kConfig, doc.origin() + ":" + std::to_string(doc.line_of(key)) + ": key '" +
                                 key + "' expects a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::array<std::size_t, 3> parse_triple(const IniDocument& doc, const std::string& key,
                                        std::array<std::size_t, 3> fallback) {
  if (!doc.has(key)) return fallback;
  const auto parts = split_list(doc.get(key));
  if (parts.size() != 3) {
    fail(ErrorCode::kConfig, doc.origin() + ":" + std::to_string(doc.line_of(key)) + ": key '" +
                                 key + "' expects three comma-separated integers");
  }
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto [ptr, ec] = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), out[i]);
    if (ec != std::errc{} || ptr != parts[i].data() + parts[i].size()) {
      fail(ErrorCode::kConfig, doc.origin() + ":" + std::to_string(doc.line_of(key)) +
                                   ": bad integer '" + parts[i] + "' in '" + key + "'");
    }
  }
  return out;
}

std::string join3(const std::array<std::size_t, 3>& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, 6);
  put_u32(out, checked_u32(ckpt.config_text.size(), "config text"));
  out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  put_u32(out, checked_u32(ckpt.tensors.size(), "tensor count"));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u32(out, checked_u32(name.size(), "tensor name"));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, checked_u32(tensor.rank(), "rank"));
    for (std::size_t extent : tensor.shape()) put_u32(out, checked_u32(extent, "extent"));
    out.write(reinterpret_cast<const char*>(tensor.data().data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  if (!out) fail(ErrorCode::kIo, "failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 6> magic{};
  in.read(magic.data(), 6);
  if (in.gcount() != 6 || std::memcmp(magic.data(), kCheckpointMagic, 6) != 0) {
    fail(ErrorCode::kFormat, "bad checkpoint magic '" +
                                 std::string(magic.data(), static_cast<std::size_t>(in.gcount())) +
                                 "' (expected GENET1)");
  }
  Checkpoint ckpt;
  ckpt.config_text.resize(get_u32(in, "config length"));
  read_exact(in, ckpt.config_text.data(), ckpt.config_text.size(), "config text");
  const std::uint32_t count = get_u32(in, "tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name(get_u32(in, "name length"), '\0');
    read_exact(in, name.data(), name.size(), "tensor name");
    const std::uint32_t rank = get_u32(in, "rank");
    if (rank > 8) fail(ErrorCode::kFormat, "tensor '" + name + "' has implausible rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get_u32(in, "extent"));
    std::vector<float> values(shape_numel(shape));
    read_exact(in, reinterpret_cast<char*>(values.data()), values.size() * sizeof(float),
               "tensor data");
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

void write_model_config(IniDocument& doc, const GENetConfig& cfg) {
  doc.set("model.in_channels", std::to_string(cfg.in_channels));
  doc.set("model.stem_channels", std::to_string(cfg.stem_channels));
  doc.set("model.stage_blocks", join3(cfg.stage_blocks));
  doc.set("model.stage_channels", join3(cfg.stage_channels));
  doc.set("model.num_classes", std::to_string(cfg.num_classes));
  doc.set("model.num_groups", std::to_string(cfg.num_groups));
  doc.set("model.split_layer", std::string(to_string(cfg.split_layer)));
  doc.set("model.block_kind", std::string(to_string(cfg.block_kind)));
  doc.set("model.head_width_multiplier", format_double(cfg.head_width_multiplier));
}

GENetConfig read_model_config(const IniDocument& doc) {
  GENetConfig cfg;
  cfg.in_channels = parse_size(doc, "model.in_channels", cfg.in_channels);
  cfg.stem_channels = parse_size(doc, "model.stem_channels", cfg.stem_channels);
  cfg.stage_blocks = parse_triple(doc, "model.stage_blocks", cfg.stage_blocks);
  cfg.stage_channels = parse_triple(doc, "model.stage_channels", cfg.stage_channels);
  cfg.num_classes = parse_size(doc, "model.num_classes", cfg.num_classes);
  cfg.num_groups = parse_size(doc, "model.num_groups", cfg.num_groups);
  if (doc.has("model.split_layer")) cfg.split_layer = parse_split_layer(doc.get("model.split_layer"));
  if (doc.has("model.block_kind")) cfg.block_kind = parse_block_kind(doc.get("model.block_kind"));
  if (doc.has("model.head_width_multiplier")) {
    const std::string& text = doc.get("model.head_width_multiplier");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      fail(ErrorCode::kConfig, "model.head_width_multiplier expects a number, got '" + text + "'");
    }
    cfg.head_width_multiplier = v;
  }
  cfg.validate();
  return cfg;
}

Checkpoint make_checkpoint(const GENetModel& model, std::string config_text) {
  Checkpoint ckpt{std::move(config_text), {}};
  for (const auto& [name, tensor] : model.state()) ckpt.tensors.emplace_back(name, tensor.detach());
  return ckpt;
}

GENetModel model_from_checkpoint(const Checkpoint& ckpt) {
  const IniDocument doc = IniDocument::parse(ckpt.config_text, "<checkpoint>");
  Rng rng(0);
  GENetModel model(read_model_config(doc), rng);
  model.load_state(ckpt.tensors);
  return model;
}

}  // namespace genet
