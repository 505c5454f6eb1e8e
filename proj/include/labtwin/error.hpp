#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace labtwin {

// Base for all library errors. CLI maps subclasses to exit codes:
// ValidationError and FormatError -> 1, ResourceError and IoError -> 2.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input does not parse under its declared format.
class FormatError : public Error {
public:
  using Error::Error;
};

// Semantic rule violated (bad scene, digest mismatch, bad arguments).
class ValidationError : public Error {
public:
  using Error::Error;
};

// A configured memory or capacity budget cannot be honoured.
class ResourceError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace labtwin
