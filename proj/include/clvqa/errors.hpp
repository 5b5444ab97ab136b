#pragma once

#include <stdexcept>
#include <string>

namespace clvqa {

// Violated precondition or shape/dimension mismatch inside the library.
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown key, malformed value, invalid flag combination.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or malformed data files, incompatible checkpoints.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mid-run failure that aborts a training run (e.g. checkpoint write failure).
struct runtime_abort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace clvqa
