#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dgm {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, long index)
      : Error(what), index_(index) {}

  /// Layer, particle or step index at which the value was detected (-1 if unknown).
  long index() const noexcept { return index_; }

 private:
  long index_;
};

/// The reverse pass reached a primitive that has no derivative rule.
class UnsupportedPrimitive : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training loss exceeded the divergence threshold or became non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace dgm
