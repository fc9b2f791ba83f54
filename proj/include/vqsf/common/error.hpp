#pragma once

#include <stdexcept>
#include <string>

namespace vqsf {

// Exit codes shared by every CLI subcommand.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, divergence = 3 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Bad arguments, unknown config keys, out-of-range values.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::usage, what) {}
};

// Malformed or mismatched files, shape mismatches, empty inputs.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

// Non-finite values produced during training or a forward/backward pass.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ExitCode::divergence, what) {}
};

}  // namespace vqsf
