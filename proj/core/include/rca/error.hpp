#pragma once

#include <stdexcept>
#include <string>

namespace rca {

// Base for every error raised by the library. The CLI maps ValidationError
// and ParseError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CSV, JSON, config).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A computation has no defined result for the given input
// (e.g. statistics of an all-missing column).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace rca
