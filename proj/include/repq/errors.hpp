#pragma once

#include <stdexcept>
#include <string>

namespace repq {

// Error taxonomy mirrored by the CLI exit codes:
//   ParamError   -> usage (2)
//   DataError    -> malformed/missing input (3)
//   NumericError -> non-finite values, diverged training (4)

class ParamError : public std::invalid_argument {
public:
  explicit ParamError(const std::string& msg) : std::invalid_argument(msg) {}
};

class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace repq
