#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace xfsc {

enum class ErrorKind {
  // validation
  EmptyMatrix,
  NonFinite,
  NegativeEntry,
  RowSumOutOfTolerance,
  Empty,
  OutOfRange,
  MissingClass,
  LengthMismatch,
  DimensionMismatch,
  DegenerateDimension,
  // numerics
  NumericalFailure,
  NegativeTrace,
  NonFiniteLoss,
  // statistics
  ConstantInput,
  TooFewPoints,
  NotBinary,
  MissingPositiveClass,
  InsufficientData,
  InvalidSpec,
  // files
  Malformed,
  DimensionHeaderMismatch,
  UnsupportedVersion,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NegativeEntry: return "NegativeEntry";
    case ErrorKind::RowSumOutOfTolerance: return "RowSumOutOfTolerance";
    case ErrorKind::Empty: return "Empty";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateDimension: return "DegenerateDimension";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::NegativeTrace: return "NegativeTrace";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NotBinary: return "NotBinary";
    case ErrorKind::MissingPositiveClass: return "MissingPositiveClass";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::Malformed: return "Malformed";
    case ErrorKind::DimensionHeaderMismatch: return "DimensionHeaderMismatch";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// True for errors raised while reading or writing files.
constexpr bool is_io_error(ErrorKind kind) {
  return kind == ErrorKind::Malformed || kind == ErrorKind::DimensionHeaderMismatch ||
         kind == ErrorKind::UnsupportedVersion || kind == ErrorKind::Io;
}

/// Single exception type for the library. `kind()` identifies the failure;
/// `location()` carries a 1-based line number or a byte offset for file errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<std::size_t> location = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        location_(location) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> location() const noexcept { return location_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> location_;
};

}  // namespace xfsc
