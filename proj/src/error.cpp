#include "bias_audit/error.hpp"

namespace bias_audit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "MALFORMED_LINE";
    case ErrorCode::DuplicateId: return "DUPLICATE_ID";
    case ErrorCode::InvalidProbs: return "INVALID_PROBS";
    case ErrorCode::BadMagic: return "BAD_MAGIC";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::TruncatedPayload: return "TRUNCATED_PAYLOAD";
    case ErrorCode::NonFiniteValue: return "NON_FINITE_VALUE";
    case ErrorCode::MissingPred: return "MISSING_PRED";
    case ErrorCode::UnknownClass: return "UNKNOWN_CLASS";
    case ErrorCode::InvalidLexicon: return "INVALID_LEXICON";
    case ErrorCode::InvalidStats: return "INVALID_STATS";
    case ErrorCode::InvalidSpans: return "INVALID_SPANS";
    case ErrorCode::EmptyTable: return "EMPTY_TABLE";
    case ErrorCode::TooFewClassesForPearson: return "TOO_FEW_CLASSES_FOR_PEARSON";
    case ErrorCode::MissingGender: return "MISSING_GENDER";
    case ErrorCode::ClassSetMismatch: return "CLASS_SET_MISMATCH";
    case ErrorCode::LabelOutOfRange: return "LABEL_OUT_OF_RANGE";
    case ErrorCode::SingleGender: return "SINGLE_GENDER";
    case ErrorCode::ScheduleTooFine: return "SCHEDULE_TOO_FINE";
    case ErrorCode::InvalidSchedule: return "INVALID_SCHEDULE";
    case ErrorCode::ZeroVector: return "ZERO_VECTOR";
    case ErrorCode::DegenerateDenominator: return "DEGENERATE_DENOMINATOR";
    case ErrorCode::UnequalTargetSizes: return "UNEQUAL_TARGET_SIZES";
    case ErrorCode::EmptyContextPool: return "EMPTY_CONTEXT_POOL";
    case ErrorCode::WordAbsent: return "WORD_ABSENT";
    case ErrorCode::InvalidWeatSpec: return "INVALID_WEAT_SPEC";
    case ErrorCode::MissingText: return "MISSING_TEXT";
    case ErrorCode::MissingSpans: return "MISSING_SPANS";
    case ErrorCode::SpanOutOfBounds: return "SPAN_OUT_OF_BOUNDS";
    case ErrorCode::VocabExhausted: return "VOCAB_EXHAUSTED";
    case ErrorCode::ZeroVariance: return "ZERO_VARIANCE";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::EmptyGroup: return "EMPTY_GROUP";
    case ErrorCode::EmptySeries: return "EMPTY_SERIES";
    case ErrorCode::NoCommonSeeds: return "NO_COMMON_SEEDS";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

}  // namespace bias_audit
