#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfm {

/// Base of every numeric failure the library reports. Contract violations
/// (wrong dimensions, arguments outside a documented range) throw
/// std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class SingularCorrelation : public Error {
 public:
  SingularCorrelation(std::size_t pivot, const std::string& what)
      : Error(what + " (failing pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class OutOfRegime : public Error {
 public:
  using Error::Error;
};

class DegenerateGradient : public Error {
 public:
  using Error::Error;
};

class Unsatisfiable : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) {
    throw std::invalid_argument(message);
  }
}

}  // namespace detail
}  // namespace rfm
