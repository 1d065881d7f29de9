#pragma once

#include <stdexcept>
#include <string>

namespace dga {

/// Bad caller input: malformed files, out-of-range indices, shape mismatches.
/// The CLI maps this to exit code 1.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure while computing on valid input (divergence, non-finite values, I/O).
/// The CLI maps this to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dga
