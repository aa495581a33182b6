#pragma once

#include <stdexcept>
#include <string>

namespace neutart {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// ConfigError -> 1, ParseError/DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed input file; carries a human-readable location when known.
class ParseError : public Error {
public:
  using Error::Error;
  ParseError(const std::string& file, long line, const std::string& msg)
      : Error(file + ":" + std::to_string(line) + ": " + msg) {}
};

class DataError : public Error {
public:
  using Error::Error;
};

// Shape conformance failure in tensor ops; message names the op and both shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace neutart
