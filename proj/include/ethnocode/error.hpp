#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ethnocode {

enum class ErrorKind {
  InvalidArgument,
  IoError,
  MalformedFilename,
  InvalidDate,
  EncodingError,
  SeparatorCollision,
  SchemaError,
  DuplicateUnit,
  NotFound,
  AlignmentError,
  FormatError,
  EmptyVocabulary,
  InvalidK,
  InsufficientVocabulary,
  RankDeficient,
  SeedsAbsent,
  InvalidPartition,
  TooFew,
  InvalidOrder,
  TooFewExamples,
  MissingEmbedding,
  DegenerateLabels,
  NoPositives,
  EmptyEval,
  LengthMismatch,
  UndefinedAlpha,
  IncompleteReview,
  ConfigError,
  Conflict,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MalformedFilename: return "MalformedFilename";
    case ErrorKind::InvalidDate: return "InvalidDate";
    case ErrorKind::EncodingError: return "EncodingError";
    case ErrorKind::SeparatorCollision: return "SeparatorCollision";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::DuplicateUnit: return "DuplicateUnit";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::InsufficientVocabulary: return "InsufficientVocabulary";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::SeedsAbsent: return "SeedsAbsent";
    case ErrorKind::InvalidPartition: return "InvalidPartition";
    case ErrorKind::TooFew: return "TooFew";
    case ErrorKind::InvalidOrder: return "InvalidOrder";
    case ErrorKind::TooFewExamples: return "TooFewExamples";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::EmptyEval: return "EmptyEval";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::UndefinedAlpha: return "UndefinedAlpha";
    case ErrorKind::IncompleteReview: return "IncompleteReview";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::Conflict: return "Conflict";
  }
  return "Error";
}

/// Every failure raised by the library. `kind()` is the stable error class
/// printed by the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ethnocode
