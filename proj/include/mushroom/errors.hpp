#pragma once

#include <stdexcept>
#include <string>

namespace mushroom {

/// Base of every library error. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside the accepted domain (bad flag, bad tag).
class ArgumentError : public Error {
public:
  using Error::Error;
};

/// Tensor shapes do not compose.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, matrices, sequences).
class DataError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf produced, saturated distance, degenerate embedding.
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace mushroom
