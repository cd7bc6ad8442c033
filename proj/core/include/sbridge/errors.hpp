#pragma once

#include <stdexcept>
#include <string>

namespace sbridge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: config files, coefficient specs, invalid problem data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure at runtime: positivity loss, divergence, CFL violation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sbridge
