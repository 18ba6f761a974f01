#pragma once

#include <stdexcept>
#include <string>

namespace cdog {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two cameras share a center, so their epipolar geometry is undefined.
class DegenerateRig : public Error {
 public:
  using Error::Error;
};

/// The queried point is the epipole; the resulting line has no direction.
class DegenerateLine : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

/// Viewing rays are (near) parallel; the triangulated point is not determined.
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

/// Malformed or schema-violating input document.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdog
