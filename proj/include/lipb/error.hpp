#pragma once

#include <stdexcept>
#include <string>

namespace lipb {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared where the numerics require finite input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lipb
