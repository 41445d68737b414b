#pragma once

#include <stdexcept>
#include <string>

namespace fairlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix or model dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input outside an operation's mathematical domain (zero vectors, etc.).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A sensitive group has no members (or a degenerate mean) where one is required.
class DegenerateGroupError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairlab
