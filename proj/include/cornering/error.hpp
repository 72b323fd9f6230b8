#pragma once

#include <stdexcept>
#include <string>

namespace cornering {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A physical or configuration parameter is outside its valid domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Numerical integration produced a non-finite value.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t sample)
      : Error(what), sample_(sample) {}
  std::size_t sample() const { return sample_; }

 private:
  std::size_t sample_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class MissingField : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class IllConditionedFit : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// API misuse, e.g. a backward pass requested before any forward pass.
class UsageError : public Error {
 public:
  using Error::Error;
};

class SingularReference : public Error {
 public:
  using Error::Error;
};

class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or configuration document.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace cornering
