#ifndef BSLAB_COMMON_ERROR_HPP_
#define BSLAB_COMMON_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace bslab {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (layout files, config files, CSV, JSONL).
class ParseError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that refers to missing or inconsistent data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration keys or values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or parameters during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace bslab

#endif  // BSLAB_COMMON_ERROR_HPP_
