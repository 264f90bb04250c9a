#pragma once

#include <stdexcept>
#include <string>

namespace vhdr {

/// Malformed input data: bad file headers, shape mismatches, out-of-range values.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation produced non-finite values (loss, gradient, parameter).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad command line or configuration.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vhdr
