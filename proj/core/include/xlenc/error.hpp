#pragma once

#include <stdexcept>
#include <string>

namespace xlenc {

/// Base of every exception raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input data violates its documented schema.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (shape mismatch, reused trace, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace xlenc
