#include "genet/error.hpp"

namespace genet {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kArgument: return "E_ARG";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kFormat: return "E_FORMAT";
    case ErrorCode::kDiverged: return "E_DIVERGED";
    case ErrorCode::kNotPsd: return "E_PSD";
    case ErrorCode::kMatch: return "E_MATCH";
    case ErrorCode::kGradCheck: return "E_GRADCHECK";
  }
  return "E_UNKNOWN";
}

}  // namespace genet
