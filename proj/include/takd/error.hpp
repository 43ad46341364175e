// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace takd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree or a shape is invalid for the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, missing file or short read.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (NaN loss, degenerate statistics).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

namespace log {

inline bool& quiet() {
  static bool q = false;
  return q;
}

inline void warn(const std::string& msg) {
  if (!quiet()) std::cerr << "[takd] warning: " << msg << '\n';
}

inline void info(const std::string& msg) {
  if (!quiet()) std::cerr << "[takd] " << msg << '\n';
}

}  // namespace log
}  // namespace takd
