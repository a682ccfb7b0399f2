#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace holoev {

enum class ErrorKind {
  MalformedLine,
  EmptyInput,
  GeometryMissing,
  BadMagic,
  VersionUnsupported,
  TruncatedRecord,
  BadPolarity,
  SpecInvalid,
  ConfigInvalid,
  ChannelOutOfRange,
  ShapeMismatch,
  TooLarge,
  BadBin,
  TooShort,
  NonFinite,
  SelectorOutOfRange,
  DtypeUnknown,
  LengthMismatch,
  DuplicateName,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

// Every library failure is reported through this type. `detail()` carries the
// kind-specific integer payload (line number, byte offset) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::uint64_t detail = 0)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::uint64_t detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::uint64_t detail_;
};

}  // namespace holoev
