#ifndef CAMOBREW_ERROR_HPP
#define CAMOBREW_ERROR_HPP

#include <stdexcept>
#include <string>

namespace camobrew {

enum class ErrorKind {
  precondition,
  dimension,
  non_finite,
  degenerate,
  parse,
  io,
  config,
  mismatch,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::mismatch: return "mismatch";
  }
  return "unknown";
}

/// Every failure surfaced by the library carries a category so callers
/// (the CLI in particular) can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

}  // namespace camobrew

#endif  // CAMOBREW_ERROR_HPP
