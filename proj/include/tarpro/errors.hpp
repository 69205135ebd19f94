#pragma once

#include <stdexcept>
#include <string>

namespace tarpro {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite or otherwise undefined value was produced or supplied.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (CSV, config). Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace tarpro
