#pragma once

#include <stdexcept>
#include <string>

namespace spax {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spax
