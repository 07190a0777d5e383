#pragma once

#include <stdexcept>
#include <string>

namespace mmda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or combination; raised at construction time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing on-disk data (manifests, images, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmda
