#pragma once

#include <stdexcept>
#include <string>

namespace hail {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent input data: malformed files, unsupported formats,
/// geometry that does not fit, empty training sets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A segmenter backend failed or was asked for something it cannot do.
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace hail
