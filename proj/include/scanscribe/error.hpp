#pragma once

#include <stdexcept>
#include <string>

namespace scanscribe {

// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorKind {
  usage,    // bad arguments, invalid configuration
  data,     // malformed or missing input data, geometry preconditions
  numeric,  // non-finite values, failed numerical preconditions
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
  return Error(ErrorKind::usage, what);
}
inline Error data_error(const std::string& what) {
  return Error(ErrorKind::data, what);
}
inline Error numeric_error(const std::string& what) {
  return Error(ErrorKind::numeric, what);
}

}  // namespace scanscribe
