#pragma once

#include <stdexcept>
#include <string>

namespace qugia {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index outside the valid range of a graph, patch or vector.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix dimensions that do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace qugia
