#pragma once

#include <stdexcept>
#include <string>

namespace icoreg {

enum class ErrorKind {
  kInvalidArgument,
  kInvalidRotation,
  kDegenerateGeometry,
  kEmptyPatch,
  kDimensionMismatch,
  kDegenerateDescriptor,
  kFormat,
  kIo,
  kDivergence,
  kInternal,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Warnings go to stderr unless silenced (tests and benchmarks silence them).
void set_warnings_enabled(bool enabled);
void warn(const std::string& message);

}  // namespace icoreg
