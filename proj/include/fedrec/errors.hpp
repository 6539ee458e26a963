#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedrec {

// Root of every error thrown by the library. The CLI maps ValidationError
// subclasses to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: config, file format, dataset integrity.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

// Transient failure talking to a chat backend (connect, timeout). Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend answered, but not with a usable 2xx response.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& what)
      : Error("status " + std::to_string(status) + ": " + what),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace fedrec
