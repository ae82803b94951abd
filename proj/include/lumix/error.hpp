#ifndef LUMIX_ERROR_HPP
#define LUMIX_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace lumix {

/// Error categories. The CLI maps each one to a distinct exit code and
/// prints the category name so callers can branch on it.
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  non_finite,
  config,
  io_open,
  io_bad_magic,
  io_truncated,
  io_dim_mismatch,
  numeric_divergence,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::config: return "config";
    case ErrorKind::io_open: return "io_open";
    case ErrorKind::io_bad_magic: return "bad_magic";
    case ErrorKind::io_truncated: return "truncated";
    case ErrorKind::io_dim_mismatch: return "dim_mismatch";
    case ErrorKind::numeric_divergence: return "numeric_divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) fail(kind, message);
}

}  // namespace detail
}  // namespace lumix

#endif  // LUMIX_ERROR_HPP
