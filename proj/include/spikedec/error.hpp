#pragma once

#include <stdexcept>
#include <string>

namespace spikedec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An architecture, split or training configuration that cannot be realised.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A function evaluated to a non-finite value.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward without a cache.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace spikedec
