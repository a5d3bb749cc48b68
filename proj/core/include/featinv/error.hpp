#pragma once

#include <stdexcept>
#include <string>

namespace featinv {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// config/input/contract -> 2, numeric -> 3, capability -> 4.
enum class ErrorKind {
  Config,      // bad configuration value, invalid range, unknown key
  Input,       // malformed runtime input (shape mismatch, ragged groups, ...)
  Numeric,     // NaN/divergence/degenerate values during computation
  Capability,  // requested feature unsupported by the selected component
  Contract,    // a callee violated a declared contract (e.g. non-simplex output)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::Numeric:
        return 3;
      case ErrorKind::Capability:
        return 4;
      default:
        return 2;
    }
  }

 private:
  ErrorKind kind_;
};

// Raised when a latent collapses to (near-)constant values; inversion
// engines soft-abort on it instead of failing the whole run.
class DegenerateLatentError : public Error {
 public:
  explicit DegenerateLatentError(const std::string& msg)
      : Error(ErrorKind::Numeric, msg) {}
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void throw_input(const std::string& msg) {
  throw Error(ErrorKind::Input, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::Numeric, msg);
}
[[noreturn]] inline void throw_capability(const std::string& msg) {
  throw Error(ErrorKind::Capability, msg);
}
[[noreturn]] inline void throw_contract(const std::string& msg) {
  throw Error(ErrorKind::Contract, msg);
}

}  // namespace featinv
