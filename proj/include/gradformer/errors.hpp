#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gradformer {

// Incompatible tensor shapes, ranks or axes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model/training configuration or config-file syntax.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violated call contract (non-scalar loss, missing gradient, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input outside an op's numeric domain (sqrt of a negative, ...).
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or truncated file. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit FormatError(const std::string& what) : std::runtime_error(what), offset_(0) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace gradformer
