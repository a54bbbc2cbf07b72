#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cogenav {

enum class ErrorCode {
  kConfig,
  kShape,
  kMode,
  kDegenerateInput,
  kPairConstruction,
  kBatch,
  kUndefinedMetric,
  kIo,
  kFormat,
  kPretrainFailure,
  kNonFinite,
  kMissingArtifact,
  kRefused,
};

// Stable machine-parsable tag used as the CLI error prefix.
std::string_view error_tag(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace cogenav
