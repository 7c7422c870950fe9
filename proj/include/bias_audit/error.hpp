#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bias_audit {

enum class ErrorCode {
  // core-model
  MalformedLine,
  DuplicateId,
  InvalidProbs,
  BadMagic,
  DimMismatch,
  TruncatedPayload,
  NonFiniteValue,
  MissingPred,
  UnknownClass,
  InvalidLexicon,
  InvalidStats,
  InvalidSpans,
  // extrinsic-metrics
  EmptyTable,
  TooFewClassesForPearson,
  MissingGender,
  ClassSetMismatch,
  // probe-engine
  LabelOutOfRange,
  // mdl-probe
  SingleGender,
  ScheduleTooFine,
  InvalidSchedule,
  // ceat
  ZeroVector,
  DegenerateDenominator,
  UnequalTargetSizes,
  EmptyContextPool,
  WordAbsent,
  InvalidWeatSpec,
  // debias
  MissingText,
  MissingSpans,
  SpanOutOfBounds,
  VocabExhausted,
  // analysis
  ZeroVariance,
  LengthMismatch,
  EmptyGroup,
  EmptySeries,
  NoCommonSeeds,
  // synth-harness
  InvalidConfig,
  // cli
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Validation failure carrying a typed code. Maps to exit code 1 in the CLI.
class AuditError : public std::runtime_error {
 public:
  AuditError(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// File-system failure (missing, unreadable, unwritable). Maps to exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bias_audit
