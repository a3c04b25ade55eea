#pragma once

#include <stdexcept>
#include <string>

namespace dsc {

// Malformed input files, impossible shapes, bad configuration values.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses, failed numerical invariants at runtime.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dsc
