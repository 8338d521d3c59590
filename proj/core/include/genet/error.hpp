#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace genet {

// Machine-greppable error categories. The CLI prints them as `error[E_...]`.
enum class ErrorCode {
  kShape,
  kArgument,
  kConfig,
  kIo,
  kFormat,
  kDiverged,
  kNotPsd,
  kMatch,
  kGradCheck,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace genet
