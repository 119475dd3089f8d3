#pragma once

#include <stdexcept>
#include <string>

namespace stepconf {

// Input data broke a documented invariant or schema rule. Maps to exit
// code 1 in the CLI.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A file could not be opened, read, or written. Maps to exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stepconf
