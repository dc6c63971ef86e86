#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kws {

// Precondition violated by the caller: bad dimensions, empty inputs, invalid
// hyperparameters.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inputs are individually valid but inconsistent with each other, e.g. train
// and eval sets sharing utterances.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary or text file. Carries the byte offset (or line number for
// text formats) and the name of the field that failed to parse.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, std::uint64_t offset, const std::string& what)
      : std::runtime_error("format error in field '" + field + "' at offset " +
                           std::to_string(offset) + ": " + what),
        field_(std::move(field)),
        offset_(offset) {}

  const std::string& field() const noexcept { return field_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string field_;
  std::uint64_t offset_;
};

}  // namespace kws
