#pragma once

#include <stdexcept>
#include <string>

namespace keci {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (class id, token id, entity index) outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Input data that parsed but violates a domain rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (JSON, JSONL, embedding files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Binary file with a bad magic, version, or truncated body.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Bad argument values (k > |docs|, empty training set, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace keci
