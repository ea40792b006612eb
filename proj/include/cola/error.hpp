#pragma once

#include <stdexcept>
#include <string>

namespace cola {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// A constrained parameter cannot be placed on its circle (|theta| > r).
class InfeasibleInit : public Error {
 public:
  using Error::Error;
};

/// Orthogonal circle projection requested at (or numerically at) the origin.
class DegeneratePoint : public Error {
 public:
  using Error::Error;
};

/// The oblique projection line misses the circle; usually the stepsize is too large.
class NoRealRoot : public Error {
 public:
  using Error::Error;
};

/// The quasi-Newton projection residual grew instead of contracting.
class Divergence : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cola
