#pragma once

#include <stdexcept>
#include <string>

namespace rtrl {

/// Invalid configuration or mismatched shapes supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values, non-SPD matrices and similar numeric failures.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Broken internal invariant (e.g. non-monotone policy ids).
class LogicError : public std::logic_error {
 public:
  explicit LogicError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace rtrl
