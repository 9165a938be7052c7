#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gcmc {

// Violated preconditions of an operation (shape mismatch, bad indices, stale
// forward traces). These indicate a programming error rather than bad input.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid hyper-parameters or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that cannot be used: missing files, out-of-range ratings,
// duplicate (user, item) pairs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed line in an input file.
class ParseError : public DataError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite loss, gradient, or parameter during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or corrupted checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gcmc
