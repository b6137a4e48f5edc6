// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace diffrect {

/// Raised when a caller breaks an operation's precondition (bad shape, out of
/// range argument, invalid one-hot target, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Filesystem or decoding failure. The message always names the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// A file was readable but its contents are malformed.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

/// Training produced a NaN/Inf in one of the loss terms.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace diffrect
