#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gptlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (non-scalar loss, degenerate row...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data is structurally valid text but semantically wrong.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not belong to the configured backbone, or is corrupt.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given input (e.g. AUROC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace gptlab
