#include "icoreg/error.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace icoreg {

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kInvalidRotation: return "invalid rotation";
    case ErrorKind::kDegenerateGeometry: return "degenerate geometry";
    case ErrorKind::kEmptyPatch: return "empty patch";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kDegenerateDescriptor: return "degenerate descriptor";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kInternal: return "internal error";
  }
  return "unknown error";
}

void set_warnings_enabled(bool enabled) { g_warnings = enabled; }

void warn(const std::string& message) {
  if (!g_warnings) return;
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  std::cerr << "warning: " << message << '\n';
}

}  // namespace icoreg
