#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace pyramem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public InvalidArgumentError {
 public:
  DimensionMismatchError(std::size_t expected, std::size_t actual)
      : InvalidArgumentError("dimension mismatch: expected " + std::to_string(expected) +
                             ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// Malformed snapshot / log / payload. `offset` is the byte offset reported by
// the JSON parser when the failure is syntactic; `field` is the JSON path of the
// offending value when it is structural.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::size_t offset, std::string field)
      : Error(std::move(message)), offset_(offset), field_(std::move(field)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t offset_;
  std::string field_;
};

// Thrown by model adapters. `retryable` is the hint surfaced to callers.
class AdapterError : public Error {
 public:
  explicit AdapterError(const std::string& message, bool retryable = true)
      : Error(message), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

}  // namespace pyramem
