#pragma once

#include <stdexcept>
#include <string>

namespace codelid {

// Raised for malformed input files, inconsistent models and numeric failures.
// Precondition violations by the caller use std::invalid_argument instead.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace codelid
