#pragma once

#include <stdexcept>
#include <string>

namespace ee {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions of arguments do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf, singular systems, failed integrations (CLI exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_shape(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

inline void require_config(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace detail
}  // namespace ee
