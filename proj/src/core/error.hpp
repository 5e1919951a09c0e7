#pragma once
#include <stdexcept>
#include <string>

namespace phwm {

enum class ErrorKind {
  Dimension,
  Numerical,
  Config,
  Io,
  InsufficientData,
  DegenerateBaseline,
  Version,
};

// Single exception type for the whole library. The kind survives to the C API
// boundary where it is mapped onto an exit status.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

inline void require(bool cond, ErrorKind k, const std::string& msg) {
  if (!cond) raise(k, msg);
}

}  // namespace phwm
