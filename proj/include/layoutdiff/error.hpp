#pragma once

#include <stdexcept>
#include <string>

namespace layoutdiff {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid values, shape mismatches, or documents that fail validation.
/// The CLI maps this to exit code 2.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (unreadable input, unwritable output).
/// The CLI maps this to exit code 3.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace layoutdiff
