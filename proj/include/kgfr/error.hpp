#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgfr {

// Base of every error thrown by the library. The CLI maps each subclass to an
// exit code (see tools/kgfr_main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or record.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Inconsistent dimensions, bad hyperparameters, misuse of an API.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unknown id, label, key, or template.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Violated precondition on an argument (empty topic set, k = 0, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity observed in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Embedding backend failure. Transport failures are retryable.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

// Chat backend failure after the retry budget was spent, or a scripted
// transcript that has no reply for a prompt.
class LlmError : public Error {
 public:
  using Error::Error;
};

// A propagation run exceeded its configured edge budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace kgfr
