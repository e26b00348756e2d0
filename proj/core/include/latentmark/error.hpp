#pragma once

#include <stdexcept>
#include <string>

namespace latentmark {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument, shape mismatch or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File was readable but its contents are malformed or unsupported.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace latentmark
