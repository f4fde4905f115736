#pragma once

#include <stdexcept>
#include <string>

namespace selfevo {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad lengths, unknown task,
// out-of-range parameter).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

// A computation produced or received a non-finite value, or a probability
// ratio overflowed.
class NumericError : public Error {
public:
  using Error::Error;
};

// Configuration file could not be read or failed validation. `field` names the
// offending key path (e.g. "grpo.clip_epsilon") when one is known.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

}  // namespace selfevo
