// Exception hierarchy shared by all voicesep modules.
//
// Every error derives from voicesep::Error. The CLI maps InputError
// subclasses to exit code 2 and everything else to exit code 3.

#pragma once

#include <stdexcept>
#include <string>

namespace voicesep {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with user-supplied data or configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  ValidationError(std::string field, const std::string& message)
      : InputError(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class MissingVoiceError : public InputError {
 public:
  using InputError::InputError;
};

class NotMonophonicError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class ConsistencyError : public InputError {
 public:
  using InputError::InputError;
};

class SizeError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class DegreeError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace voicesep
