#pragma once

#include <stdexcept>
#include <string>

namespace wcdiff {

// Error categories; the CLI maps each category to a distinct exit code.
enum class ErrorKind {
  Usage,      // bad parameters, bad config, violated preconditions
  Io,         // missing files, unreadable/unwritable paths
  Format,     // malformed on-disk data (magic, truncation, version)
  Shape,      // dimension/shape mismatches between values
  Numeric,    // NaN/Inf or other numeric breakdown
  Integrity,  // violated freeze/checksum contracts
  State       // API misuse (backward without forward, stale caches)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error(ErrorKind::Usage, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorKind::Format, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorKind::Shape, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorKind::Numeric, m) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error(ErrorKind::Integrity, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorKind::State, m) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Format: return 4;
    case ErrorKind::Shape: return 2;  // shape problems stem from bad configuration
    case ErrorKind::Numeric: return 5;
    case ErrorKind::Integrity: return 6;
    case ErrorKind::State: return 7;
  }
  return 1;
}

}  // namespace wcdiff
