#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace odn {

/// Category label. 0 is reserved for "unknown"; knowns are positive.
using CategoryId = std::uint32_t;
inline constexpr CategoryId kUnknownLabel = 0;

using SampleId = std::uint64_t;

enum class ErrorKind {
  load,
  config,
  shape,
  numeric,
  setup,
  logic,
  missing_label,
  split,
  oracle,
  protocol,
  emit,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::load: return "load";
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::setup: return "setup";
    case ErrorKind::logic: return "logic";
    case ErrorKind::missing_label: return "missing-label";
    case ErrorKind::split: return "split";
    case ErrorKind::oracle: return "oracle";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::emit: return "emit";
  }
  return "unknown";
}

/// The single exception type thrown by the library; `kind()` says which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// 17 significant digits: parses back to the identical double.
inline std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

/// splitmix64 finalizer; derives independent stream seeds from one base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index = 0) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1) + 0xbf58476d1ce4e5b9ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace odn
