#pragma once

#include <stdexcept>
#include <string>

namespace wordeval {

enum class ErrorKind {
  Io,
  Encoding,
  Format,
  EmptyInput,
  Coverage,
  Domain,
  Degenerate,
  Transport,
  Protocol,
  Configuration,
  Numeric,
  Consistency,
};

const char* to_string(ErrorKind kind);

/// All recoverable failures in the toolkit are reported through this type.
/// The kind drives CLI exit codes and lets callers react to specific classes
/// (e.g. the evaluation runner treats Transport as an aborted event).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace wordeval
