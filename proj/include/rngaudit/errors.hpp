#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rngaudit {

/// Invalid argument or precondition violation.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Text input that could not be parsed; carries the offending offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Input is shorter than a test's minimum supported length.
class UnsupportedLength : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Persisted data is malformed or inconsistent (bad record, version, shape).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted data disagrees with its own manifest.
class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch, int batch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace rngaudit
