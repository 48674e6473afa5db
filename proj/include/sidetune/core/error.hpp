// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sidetune {

enum class ErrorKind {
  // configuration
  EmptyConfig,
  NegativeCoefficient,
  ConstraintViolation,
  ConfigError,
  InvalidWidth,
  CheckpointMismatch,
  // data
  MissingRoot,
  EmptyCorpus,
  LayoutMismatch,
  SizeMismatch,
  MissingToken,
  DegenerateImage,
  IoError,
  // runtime
  DimensionMismatch,
  ArityMismatch,
  ShapeError,
  OutOfRange,
  EngineMissing,
  OcrFailure,
  Timeout,
  DivergedLoss,
  EmptyEvalSet,
};

constexpr std::string_view kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyConfig: return "EmptyConfig";
    case ErrorKind::NegativeCoefficient: return "NegativeCoefficient";
    case ErrorKind::ConstraintViolation: return "ConstraintViolation";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidWidth: return "InvalidWidth";
    case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorKind::MissingRoot: return "MissingRoot";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::LayoutMismatch: return "LayoutMismatch";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::MissingToken: return "MissingToken";
    case ErrorKind::DegenerateImage: return "DegenerateImage";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ArityMismatch: return "ArityMismatch";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::EngineMissing: return "EngineMissing";
    case ErrorKind::OcrFailure: return "OcrFailure";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
  }
  return "Unknown";
}

// Process exit codes used by the command-line front end.
enum class ErrorCategory : int { Config = 2, Data = 3, Runtime = 4 };

constexpr ErrorCategory category_of(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyConfig:
    case ErrorKind::NegativeCoefficient:
    case ErrorKind::ConstraintViolation:
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidWidth:
    case ErrorKind::CheckpointMismatch:
      return ErrorCategory::Config;
    case ErrorKind::MissingRoot:
    case ErrorKind::EmptyCorpus:
    case ErrorKind::LayoutMismatch:
    case ErrorKind::SizeMismatch:
    case ErrorKind::MissingToken:
    case ErrorKind::DegenerateImage:
    case ErrorKind::IoError:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Runtime;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return kind_name(kind_); }
  int exit_code() const noexcept { return static_cast<int>(category_of(kind_)); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace sidetune
