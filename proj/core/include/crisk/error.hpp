#pragma once

#include <stdexcept>
#include <string>

namespace crisk {

/// Broad failure class; the CLI maps each one to a distinct exit code.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Logistic fit diverging because some column perfectly predicts the outcome.
class SeparationError : public NumericalError {
 public:
  SeparationError(const std::string& column, const std::string& what)
      : NumericalError(what), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

/// A conditioning event required by an identifying functional has probability zero.
class PositivityError : public NumericalError {
 public:
  explicit PositivityError(const std::string& what) : NumericalError(what) {}
};

}  // namespace crisk
