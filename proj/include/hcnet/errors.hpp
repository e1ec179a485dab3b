#pragma once

#include <stdexcept>
#include <string>

namespace hcnet {

// Error categories map 1:1 onto CLI exit codes (see tools/hcnet.cpp).

// Bad invocation of an API or command: wrong arity, non-scalar loss, etc.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values: bad divisibility, even kernel, Nyquist violation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between tensors or grids.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// File system and encoding problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; message names the offending byte offset.
class ParseError : public IoError {
 public:
  explicit ParseError(const std::string& msg) : IoError(msg) {}
};

// Explicit-scheme stability bound violated without the unsafe flag.
class StabilityError : public std::runtime_error {
 public:
  explicit StabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (NaN loss abort).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hcnet
