#pragma once

#include <stdexcept>
#include <string>

namespace naturalmos {

/// Error reading or interpreting external data (files, manifests, checkpoints).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure during computation (NaN loss, divergence).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace naturalmos
