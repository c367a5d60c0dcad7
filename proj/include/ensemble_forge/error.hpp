#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ensemble_forge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
        row_(row),
        column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

/// A numerical procedure failed to reach its tolerance. Carries the best estimate so far.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double partial_estimate)
      : Error(what), partial_estimate_(partial_estimate) {}

  double partial_estimate() const noexcept { return partial_estimate_; }

 private:
  double partial_estimate_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace ensemble_forge
