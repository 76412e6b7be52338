// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splitveil {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (too few rows, labels out of range, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (e.g. ROC AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A numeric parameter is out of its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, run, or rotation configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The requested obfuscation scheme cannot be applied to this input.
class UnsupportedSchemeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents; carries a 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Malformed wire frame.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The server rejected a well-formed request (shape mismatch, missing field, ...).
class ApplicationError : public Error {
 public:
  using Error::Error;
};

/// Connection-level failure. Requests are idempotent, so callers may retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace splitveil
