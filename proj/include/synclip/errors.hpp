#pragma once

#include <stdexcept>
#include <string>

namespace synclip {

// Error taxonomy mirrored by the CLI exit-code contract:
//   0 success, 2 config/contract error, 3 numeric failure, 4 I/O error.
enum class ErrorKind { config, contract, unsupported_op, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::numeric: return 3;
      case ErrorKind::io: return 4;
      default: return 2;
    }
  }

  const char* category() const {
    switch (kind_) {
      case ErrorKind::config: return "config";
      case ErrorKind::contract: return "contract";
      case ErrorKind::unsupported_op: return "unsupported-op";
      case ErrorKind::numeric: return "numeric";
      case ErrorKind::io: return "io";
    }
    return "unknown";
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::config, msg); }
[[noreturn]] inline void throw_contract(const std::string& msg) { throw Error(ErrorKind::contract, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::io, msg); }

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw_contract(msg);
}

}  // namespace synclip
