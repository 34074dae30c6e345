#pragma once

#include <stdexcept>
#include <string>

namespace lbt {

enum class ErrorCode {
  Shape = 1,
  Domain,
  Format,
  TrainingDiverged,
  OperatorInapplicable,
  PoolExhausted,
  CalibrationFailed,
  Tuning,
  Config,
  Io,
  ContractViolation,
  MissingArtifact,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// C boundary can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace lbt
