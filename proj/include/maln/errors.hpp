#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace maln {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched ranks or extents between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Values that violate an operation's precondition (NaN, out-of-range ids, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// No monotonic alignment exists (fewer frames than tokens).
class InfeasibleError : public InputError {
 public:
  using InputError::InputError;
};

/// Argument outside the mathematical domain of the operation.
class DomainError : public InputError {
 public:
  using InputError::InputError;
};

/// Unusable configuration (generator or trainer settings).
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed tensor stream. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Brute-force enumeration refused because it would exceed the limit.
class LimitError : public Error {
 public:
  LimitError(std::uint64_t count, std::uint64_t limit)
      : Error("combinatorial limit exceeded: " + std::to_string(count) +
              " alignments > limit " + std::to_string(limit)),
        count_(count) {}

  std::uint64_t count() const noexcept { return count_; }

 private:
  std::uint64_t count_;
};

/// Training diverged; `step()` is the zero-based step that produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace maln
