#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace haf {

enum class ErrorKind {
  // backend
  EndpointUnreachable,
  MissingLogprobs,
  TokenTextMismatch,
  MalformedResponse,
  ScriptMiss,
  // similarity
  ProviderUnreachable,
  EmptyText,
  CacheMiss,
  EmptyPairSet,
  // uncertainty
  LengthMismatch,
  EmptyDecision,
  // parsing
  AlignmentImpossible,
  // metrics
  EmptyReasonList,
  SingleReason,
  ZeroConfidenceMass,
  NoNewReasons,
  NonsensicalDecision,
  InvalidWeights,
  InvalidInput,
  // ingestion
  MissingColumn,
  MalformedRow,
  // pipeline
  NoJustifyReasons,
  NecRequiresTwoReasons,
  InvalidTemplate,
  ManifestMismatch,
  // reporting / cli
  EmptyRun,
  UnknownFormat,
  CorruptRecord,
  ConfigError,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for the library. `kind()` is stable and suitable for
/// programmatic dispatch; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace haf
