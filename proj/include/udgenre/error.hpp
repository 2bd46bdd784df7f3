#pragma once

#include <stdexcept>
#include <string>

namespace udgenre {

// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (CoNLL-U, manifest, mapping, embedding file).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Inputs that parse but violate a contract (unknown genre, bad ratio, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Numerical failure inside a fitter (e.g. covariance collapse).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace udgenre
