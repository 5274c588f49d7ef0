#pragma once

#include <stdexcept>
#include <string>

namespace asvae {

// Malformed file content or a header that disagrees with its payload.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or unwritable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf in a quantity that must stay finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mixture variance g*sigma_s^2 + phi*sigma_b^2 collapsed to zero.
class DegenerateModelError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace asvae
