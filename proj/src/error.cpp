#include "disco/error.hpp"

namespace disco {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::SamplingExhausted: return "SamplingExhausted";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::DegenerateBasis: return "DegenerateBasis";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::OriginSingular: return "OriginSingular";
    case ErrorKind::UnsortedInput: return "UnsortedInput";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::Io: return "Io";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Validation: return "Validation";
    case ErrorKind::DanglingModelRef: return "DanglingModelRef";
  }
  return "Unknown";
}

}  // namespace disco
