#pragma once

// Shared domain vocabulary. Every type here is a plain value object; once a
// record is built it is never mutated, so records can be shared across
// worker threads without synchronisation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace haf {

enum class ToxicityLabel { Toxic, NonToxic, Unknown };

struct InputSample {
  std::string id;
  std::string text;
  std::optional<ToxicityLabel> toxicity_label;
  std::optional<double> toxicity_prob;
  std::string source;
};

struct TokenRecord {
  std::string text;
  double logprob = 0.0;  // natural log, <= 0
  bool special = false;  // only special tokens may carry empty text
};

struct GenerationTrace {
  std::vector<TokenRecord> tokens;
  std::string full_text;
  std::string prompt_fingerprint;

  /// Byte offset at which each token starts, plus a trailing end offset.
  std::vector<std::size_t> token_offsets() const;
};

struct TextSpan {
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  bool aligned = false;  // token range has been filled in
  bool widened = false;  // char range grown to token boundaries during alignment

  bool empty() const noexcept { return char_end <= char_start; }
  std::size_t size() const noexcept { return empty() ? 0 : char_end - char_start; }
  std::string_view view(std::string_view text) const { return text.substr(char_start, size()); }
  bool operator==(const TextSpan&) const = default;
};

enum class Stance { Toxic, MaybeToxic, NonToxic, Unresolved };

enum class DecisionKind { Sufficient, Insufficient, Doubtful, Nonsensical, Refusal };

enum class StageType { Justify, UpholdInternal, UpholdExternal, UpholdSufficiency, UpholdNecessity };

/// A pipeline stage. `index` is the Justify reason held in (sufficiency) or
/// left out (necessity); it is unused for the other stages.
struct StageKind {
  StageType type = StageType::Justify;
  std::size_t index = 0;

  static StageKind justify() { return {StageType::Justify, 0}; }
  static StageKind uphold_internal() { return {StageType::UpholdInternal, 0}; }
  static StageKind uphold_external() { return {StageType::UpholdExternal, 0}; }
  static StageKind sufficiency(std::size_t reason) { return {StageType::UpholdSufficiency, reason}; }
  static StageKind necessity(std::size_t left_out) { return {StageType::UpholdNecessity, left_out}; }

  bool is_uphold() const noexcept { return type != StageType::Justify; }
  bool has_index() const noexcept {
    return type == StageType::UpholdSufficiency || type == StageType::UpholdNecessity;
  }
  /// Stable key such as "justify" or "uphold_suf:2".
  std::string key() const;
  bool operator==(const StageKind&) const = default;
};

struct ParsedExplanation {
  TextSpan decision_span;
  std::vector<TextSpan> decision_sentences;
  std::vector<TextSpan> reason_spans;
  Stance stance = Stance::Unresolved;        // Justify only
  std::optional<DecisionKind> decision_kind;  // uphold stages; Refusal at any stage
  bool refusal_candidate = false;             // no reasons found; worth a refusal check
  std::string source_fingerprint;             // fingerprint of the parsed text
};

struct StageRecord {
  std::string sample_id;
  StageKind stage;
  std::string prompt_text;
  GenerationTrace trace;
  ParsedExplanation parsed;
  std::vector<double> reason_confidences;
  std::optional<double> decision_confidence;  // absent when the decision span is empty
  std::int64_t started_at_ms = 0;
  std::int64_t finished_at_ms = 0;
  std::string model_id;

  std::string reason_text(std::size_t i) const;
  std::string decision_text() const;
};

/// Why a metric has no value for a sample.
enum class Absence {
  NoNewReasons,
  Refusal,
  SingleReason,
  StanceMismatch,
  NoJustifyReasons,
  Nonsensical,
  StageError,
};

struct MetricValue {
  std::optional<double> value;
  std::optional<Absence> absence;

  static MetricValue of(double v) { return {v, std::nullopt}; }
  static MetricValue absent(Absence a) { return {std::nullopt, a}; }
  bool present() const noexcept { return value.has_value(); }
  bool operator==(const MetricValue&) const = default;
};

struct SufficiencyEntry {
  std::size_t reason_index = 0;
  DecisionKind decision_kind = DecisionKind::Sufficient;
  double weight = 0.0;  // w_S
  double decision_confidence = 0.0;
  double informativeness = 0.0;  // I_S
  std::size_t new_reason_count = 0;
  double value = 0.0;
  bool operator==(const SufficiencyEntry&) const = default;
};

struct NecessityEntry {
  std::size_t left_out_index = 0;
  DecisionKind decision_kind = DecisionKind::Insufficient;
  double weight = 0.0;  // w_N
  double decision_confidence = 0.0;
  double informativeness = 0.0;  // I_N
  std::size_t new_reason_count = 0;
  double value = 0.0;
  bool operator==(const NecessityEntry&) const = default;
};

/// A per-reason uphold-stance probe that produced no metric value.
struct SkippedProbe {
  std::size_t index = 0;
  Absence reason = Absence::Nonsensical;
  bool operator==(const SkippedProbe&) const = default;
};

struct MetricRecord {
  std::string sample_id;
  std::string source;
  std::string model_id;
  Stance stance = Stance::Unresolved;
  std::optional<double> stance_confidence;
  bool refusal = false;
  std::size_t justify_reason_count = 0;

  MetricValue sos;
  MetricValue dis;
  MetricValue uii;
  MetricValue uei;
  MetricValue rs;  // sample-level mean over `rs_entries`
  MetricValue rn;  // sample-level mean over `rn_entries`

  std::vector<SufficiencyEntry> rs_entries;
  std::vector<NecessityEntry> rn_entries;
  std::vector<SkippedProbe> rs_skipped;
  std::vector<SkippedProbe> rn_skipped;

  std::optional<DecisionKind> internal_decision;
  std::optional<DecisionKind> external_decision;
  std::size_t internal_new_reasons = 0;
  std::size_t external_new_reasons = 0;

  bool operator==(const MetricRecord&) const = default;
};

/// Returns an empty list when the record is consistent, otherwise one
/// message per violated invariant.
std::vector<std::string> validate_stage_record(const StageRecord& record);

/// True when every token logprob is finite and <= 0 and the token texts
/// concatenate to `full_text` byte-for-byte.
bool trace_is_consistent(const GenerationTrace& trace);

std::string_view to_string(Stance s) noexcept;
std::string_view to_string(DecisionKind k) noexcept;
std::string_view to_string(StageType t) noexcept;
std::string_view to_string(Absence a) noexcept;
std::string_view to_string(ToxicityLabel l) noexcept;

std::optional<Stance> stance_from_string(std::string_view s) noexcept;
std::optional<DecisionKind> decision_kind_from_string(std::string_view s) noexcept;
std::optional<StageType> stage_type_from_string(std::string_view s) noexcept;
std::optional<Absence> absence_from_string(std::string_view s) noexcept;
std::optional<ToxicityLabel> toxicity_label_from_string(std::string_view s) noexcept;

/// Number of unicode scalar values in a UTF-8 string (counts non-continuation bytes).
std::size_t utf8_length(std::string_view text) noexcept;

std::string_view trim(std::string_view s) noexcept;

}  // namespace haf
