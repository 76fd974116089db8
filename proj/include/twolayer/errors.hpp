#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twolayer {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown activation (or other registry) name.
class NameError : public Error {
 public:
  using Error::Error;
};

/// Non-finite inputs or iterates.
class NumericsError : public Error {
 public:
  using Error::Error;
};

/// Incompatible matrix/vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or violated operation precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `line()` is 1-based, 0 when not tied to a line.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace twolayer
