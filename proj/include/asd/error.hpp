#pragma once

#include <stdexcept>
#include <string>

namespace asd {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an operation's precondition (empty input, bad gap, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Input file does not match the configured column layout.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A row of an input file could not be parsed (strict mode only).
class ParseError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed; `stage()` names it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace asd
