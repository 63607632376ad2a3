#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace affalign {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller misuse: bad flag values, invalid arguments, backward on a stale var.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Inputs that make an operation undefined (zero-norm rows, constant rows
// with D < 2, zero-mass heat grids).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients during optimization.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step)
      : Error(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class DeterminismError : public Error {
 public:
  using Error::Error;
};

// Binary file could not be decoded. `offset` is the byte position at which
// decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Scene placement gave up after the attempt budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedTaskError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

// A finite-difference check exceeded its tolerance.
class GradientCheckError : public Error {
 public:
  using Error::Error;
};

}  // namespace affalign
