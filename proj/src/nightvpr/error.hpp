#pragma once

#include <stdexcept>
#include <string>

namespace nightvpr {

// Categories map one-to-one onto C API status codes and CLI exit codes.
enum class ErrorKind {
  Usage = 2,
  Data = 3,
  Divergence = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) {
  return Error(ErrorKind::Usage, what);
}
inline Error data_error(const std::string& what) {
  return Error(ErrorKind::Data, what);
}
inline Error divergence_error(const std::string& what) {
  return Error(ErrorKind::Divergence, what);
}

}  // namespace nightvpr
