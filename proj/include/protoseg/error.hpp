#pragma once

#include <stdexcept>
#include <string>

namespace protoseg {

// Failure categories surfaced by the library. Tests match on the kind, users
// see the message.
enum class ErrorKind {
  MissingMask,
  EmptyClass,
  CorruptImage,
  UnsupportedClassCount,
  DegenerateSplit,
  InsufficientEntries,
  EmptyUnlabeledPool,
  EmptyAfterDownsample,
  IndivisibleInput,
  EmptyMask,
  MixedClasses,
  DimensionMismatch,
  ShapeMismatch,
  NonBinaryInput,
  RangeViolation,
  NegativeSigma,
  NegativeLambda,
  CorruptCheckpoint,
  ExhaustedResampling,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingMask: return "MissingMask";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::UnsupportedClassCount: return "UnsupportedClassCount";
    case ErrorKind::DegenerateSplit: return "DegenerateSplit";
    case ErrorKind::InsufficientEntries: return "InsufficientEntries";
    case ErrorKind::EmptyUnlabeledPool: return "EmptyUnlabeledPool";
    case ErrorKind::EmptyAfterDownsample: return "EmptyAfterDownsample";
    case ErrorKind::IndivisibleInput: return "IndivisibleInput";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::MixedClasses: return "MixedClasses";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonBinaryInput: return "NonBinaryInput";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::NegativeSigma: return "NegativeSigma";
    case ErrorKind::NegativeLambda: return "NegativeLambda";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::ExhaustedResampling: return "ExhaustedResampling";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace protoseg
