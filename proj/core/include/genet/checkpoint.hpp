#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "genet/ini.hpp"
#include "genet/model.hpp"

namespace genet {

// Binary checkpoint layout (all integers little-endian):
//
//   "GENET1"                       6-byte magic
//   u32 config_length, bytes       UTF-8 config text (sectioned key/value)
//   u32 tensor_count
//   per tensor:
//     u32 name_length, bytes       UTF-8 name
//     u32 rank, u32 extents[rank]
//     f32 values[prod(extents)]    raw little-endian IEEE-754
struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr char kCheckpointMagic[] = "GENET1";

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// [model] section round trip for GENetConfig.
void write_model_config(IniDocument& doc, const GENetConfig& cfg);
GENetConfig read_model_config(const IniDocument& doc);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

Checkpoint make_checkpoint(const GENetModel& model, std::string config_text);
// Builds a model from the checkpoint's [model] section and loads its tensors.
GENetModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace genet
