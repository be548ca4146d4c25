#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cityscale {

// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input row. `row` is the 1-based line number in the source.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string reason);
  std::size_t row() const { return row_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t row_;
  std::string reason_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

// No foreign-visitor events landed in any populated region.
class EmptyTableError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DegenerateAbscissaError : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cityscale
