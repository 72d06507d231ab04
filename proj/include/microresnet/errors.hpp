#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace microresnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or invalid layer wiring.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad argument value (probability out of range, zero std, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autograd tape (second backward, foreign node, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Architecture text that does not follow the grammar.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Dataset files that are missing, truncated or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or metrics files that cannot be decoded.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& message)
      : Error("offset " + std::to_string(offset) + ": " + message), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Training diverged (non-finite loss or activations).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace microresnet
