#pragma once

#include <stdexcept>
#include <string>

namespace pensieve {

// Failure to read or write a file or stream. Maps to process exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data that violates a documented contract (bad magic, dimension
// mismatch, malformed record). Maps to process exit code 4.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pensieve
