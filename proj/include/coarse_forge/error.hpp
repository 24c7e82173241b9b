#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions between model pieces, points or maps.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A model, map or effective model violates one of its invariants
/// (non-SPD diffusion, nonpositive parameter, unknown registry name, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a meaningful answer
/// (grid too coarse, singular system, eigen-solve failure, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A simulation produced a non-finite state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t path, std::size_t step)
      : Error(what + " (path " + std::to_string(path) + ", step " +
              std::to_string(step) + ")"),
        path_(path),
        step_(step) {}

  std::size_t path() const noexcept { return path_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t path_;
  std::size_t step_;
};

/// Malformed experiment configuration. `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace cforge
