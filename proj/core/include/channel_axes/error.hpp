#pragma once

#include <stdexcept>
#include <string>

namespace channel_axes {

// Error categories map one-to-one onto CLI exit codes (see tools/).
enum class ErrorKind {
  kValidation,  // malformed input: bad manifest, shape mismatch, bad flag value
  kDegenerate,  // well-formed but numerically degenerate data
  kIo,          // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

class DegenerateDataError : public Error {
 public:
  explicit DegenerateDataError(const std::string& what)
      : Error(ErrorKind::kDegenerate, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace channel_axes
