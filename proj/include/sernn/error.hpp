#pragma once

#include <stdexcept>
#include <string>

namespace sernn {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad shape, negative gamma, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Statistic undefined for the given data (constant input, all-zero matrix).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Iterative solver exhausted its budget.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

// Non-finite state encountered during simulation or training.
class Divergence : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sernn
