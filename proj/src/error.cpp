#include "wordeval/error.hpp"

namespace wordeval {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "I/O";
    case ErrorKind::Encoding: return "encoding";
    case ErrorKind::Format: return "format";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::Coverage: return "coverage";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Degenerate: return "degenerate-input";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Consistency: return "consistency";
  }
  return "unknown";
}

}  // namespace wordeval
