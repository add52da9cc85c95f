#pragma once

#include <stdexcept>
#include <string>

namespace sd2e {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid interval (min >= max, non-finite ends).
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied malformed input (non-finite value, size mismatch...).
class InputError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// A weight-update denominator collapsed to zero.
class DegenerateRegressionError : public Error {
 public:
  using Error::Error;
};

/// Filter/smoother produced a non-finite or non-positive quantity.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sd2e
