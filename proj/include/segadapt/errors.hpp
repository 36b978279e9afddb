#pragma once

#include <stdexcept>
#include <string>

namespace segadapt {

// Exit-code mapping for the CLI lives in tools/; the library only throws.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a training stage touches data its mode forbids.
struct IsolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or parameter during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API contract violated by the caller (e.g. one-way adversarial loss
// invoked on a discriminator that is still trainable).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace segadapt
