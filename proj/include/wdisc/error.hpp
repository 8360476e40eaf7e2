#pragma once

#include <stdexcept>
#include <string>

namespace wdisc {

/// Input data or configuration violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while reading or writing an artifact on disk.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename E = ValidationError>
inline void require(bool ok, const std::string& message) {
  if (!ok) throw E(message);
}

}  // namespace detail
}  // namespace wdisc
