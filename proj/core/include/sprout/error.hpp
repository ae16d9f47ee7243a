#pragma once

#include <stdexcept>
#include <string>

namespace sprout {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A file or directory that should exist does not (or cannot be opened).
class InputError : public Error {
public:
  using Error::Error;
};

// An option value or configuration entry is invalid or missing.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Loaded or computed data violates a documented invariant.
class DataError : public Error {
public:
  using Error::Error;
};

// An operation was called outside its precondition.
class PreconditionError : public Error {
public:
  using Error::Error;
};

} // namespace sprout
