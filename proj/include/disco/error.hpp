#pragma once

#include <stdexcept>
#include <string>

namespace disco {

enum class ErrorKind {
  InvalidArgument,
  IndexOutOfRange,
  CapacityExceeded,
  SamplingExhausted,
  BehindCamera,
  DegenerateBasis,
  ShapeMismatch,
  DimensionMismatch,
  OriginSingular,
  UnsortedInput,
  NonFinite,
  Io,
  BadMagic,
  VersionMismatch,
  ChecksumMismatch,
  Parse,
  Validation,
  DanglingModelRef,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace disco
