#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mitonet {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors caused by bad inputs on disk or in configuration. The CLI maps these
// to exit status 2; everything else derived from Error maps to 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class InsufficientTissue : public Error {
 public:
  using Error::Error;
};

class DegenerateStains : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class StaleCache : public Error {
 public:
  using Error::Error;
};

class MissingClass : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

class CorruptCheckpoint : public DataError {
 public:
  using DataError::DataError;
};

class MissingFile : public DataError {
 public:
  using DataError::DataError;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedFormat : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mitonet
