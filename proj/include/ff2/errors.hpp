#pragma once

#include <stdexcept>
#include <string>

namespace ff2 {

// Error taxonomy. The CLI maps these onto stable exit codes:
// ConfigError -> 1, DataError/FormatError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreement between tensors or between a config and a payload.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value or malformed/missing config file.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Bad input data: unreadable corpus, label out of range, vocabulary mismatch.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Malformed model container: bad magic, unsupported version, truncation.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf where finite values are required; training divergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// API misuse: backward on a non-scalar, attention over fully padded input.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// A gradient-check target produced different outputs under a fixed seed.
class DeterminismError : public Error {
 public:
  explicit DeterminismError(const std::string& msg) : Error(msg) {}
};

}  // namespace ff2
