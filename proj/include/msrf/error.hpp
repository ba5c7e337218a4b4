#pragma once

#include <stdexcept>
#include <string>

namespace msrf {

// Raised for malformed inputs, unreadable files and violated preconditions.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for bad command-line usage or invalid configuration values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msrf
