#pragma once

#include <stdexcept>
#include <string>

namespace dqmp {

/// Raised when an argument lies outside the mathematical or physical domain
/// of an operation (non-positive Gamma argument, parameters outside the box).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a numerical method cannot certify the requested accuracy.
class AccuracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on malformed files (bad magic, truncated records, bad CSV rows).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an I/O operation fails; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dqmp
