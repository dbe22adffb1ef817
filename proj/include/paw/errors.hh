#pragma once

#include <stdexcept>
#include <string>

namespace paw {

// Raised when a configurable exploration budget (states, policies, ...) is
// exhausted; surfaces as its own CLI exit code.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace paw
