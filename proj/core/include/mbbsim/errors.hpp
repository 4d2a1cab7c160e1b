#pragma once

#include <stdexcept>
#include <string>

namespace mbbsim {

/// Invalid model construction or referential integrity failure.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Scenario or system description file could not be parsed.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// A scenario, event or override references an id that does not exist.
class UnknownTargetError : public ValidationError {
 public:
  explicit UnknownTargetError(const std::string& what) : ValidationError(what) {}
};

/// A command exceeds a device rating.
class RatingExceededError : public std::runtime_error {
 public:
  explicit RatingExceededError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mbbsim
