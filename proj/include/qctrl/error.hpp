#pragma once

#include <stdexcept>
#include <string>

namespace qctrl {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  config,     ///< invalid argument or configuration (exit 2)
  numerical,  ///< divergence, non-finite values, invalid density matrix (exit 3)
  io,         ///< unreadable/unwritable/corrupt files (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
  }
  return 1;
}

}  // namespace qctrl
