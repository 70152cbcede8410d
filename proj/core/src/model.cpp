#include "haf/model.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <utility>

#include "haf/error.hpp"

namespace haf {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::pair<Enum, std::string_view>, N>& table,
                           std::string_view name) noexcept {
  for (const auto& [value, label] : table) {
    if (label == name) return value;
  }
  return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table,
                         Enum value) noexcept {
  for (const auto& [v, label] : table) {
    if (v == value) return label;
  }
  return "?";
}

constexpr std::array<std::pair<Stance, std::string_view>, 4> kStances{{
    {Stance::Toxic, "toxic"},
    {Stance::MaybeToxic, "maybe_toxic"},
    {Stance::NonToxic, "non_toxic"},
    {Stance::Unresolved, "unresolved"},
}};

constexpr std::array<std::pair<DecisionKind, std::string_view>, 5> kDecisions{{
    {DecisionKind::Sufficient, "sufficient"},
    {DecisionKind::Insufficient, "insufficient"},
    {DecisionKind::Doubtful, "doubtful"},
    {DecisionKind::Nonsensical, "nonsensical"},
    {DecisionKind::Refusal, "refusal"},
}};

constexpr std::array<std::pair<StageType, std::string_view>, 5> kStages{{
    {StageType::Justify, "justify"},
    {StageType::UpholdInternal, "uphold_internal"},
    {StageType::UpholdExternal, "uphold_external"},
    {StageType::UpholdSufficiency, "uphold_suf"},
    {StageType::UpholdNecessity, "uphold_nec"},
}};

constexpr std::array<std::pair<Absence, std::string_view>, 7> kAbsences{{
    {Absence::NoNewReasons, "no-new-reasons"},
    {Absence::Refusal, "refusal"},
    {Absence::SingleReason, "single-reason"},
    {Absence::StanceMismatch, "stance-mismatch"},
    {Absence::NoJustifyReasons, "no-justify-reasons"},
    {Absence::Nonsensical, "nonsensical"},
    {Absence::StageError, "stage-error"},
}};

constexpr std::array<std::pair<ToxicityLabel, std::string_view>, 3> kLabels{{
    {ToxicityLabel::Toxic, "toxic"},
    {ToxicityLabel::NonToxic, "non-toxic"},
    {ToxicityLabel::Unknown, "unknown"},
}};

bool in_unit_interval(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

std::string_view to_string(Stance s) noexcept { return name_of(kStances, s); }
std::string_view to_string(DecisionKind k) noexcept { return name_of(kDecisions, k); }
std::string_view to_string(StageType t) noexcept { return name_of(kStages, t); }
std::string_view to_string(Absence a) noexcept { return name_of(kAbsences, a); }
std::string_view to_string(ToxicityLabel l) noexcept { return name_of(kLabels, l); }

std::optional<Stance> stance_from_string(std::string_view s) noexcept { return lookup(kStances, s); }
std::optional<DecisionKind> decision_kind_from_string(std::string_view s) noexcept {
  return lookup(kDecisions, s);
}
std::optional<StageType> stage_type_from_string(std::string_view s) noexcept {
  return lookup(kStages, s);
}
std::optional<Absence> absence_from_string(std::string_view s) noexcept {
  return lookup(kAbsences, s);
}
std::optional<ToxicityLabel> toxicity_label_from_string(std::string_view s) noexcept {
  return lookup(kLabels, s);
}

std::string StageKind::key() const {
  std::string k(to_string(type));
  if (has_index()) k += ":" + std::to_string(index);
  return k;
}

std::vector<std::size_t> GenerationTrace::token_offsets() const {
  std::vector<std::size_t> offsets;
  offsets.reserve(tokens.size() + 1);
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    offsets.push_back(pos);
    pos += t.text.size();
  }
  offsets.push_back(pos);
  return offsets;
}

std::string StageRecord::reason_text(std::size_t i) const {
  return std::string(trim(parsed.reason_spans.at(i).view(trace.full_text)));
}

std::string StageRecord::decision_text() const {
  return std::string(trim(parsed.decision_span.view(trace.full_text)));
}

bool trace_is_consistent(const GenerationTrace& trace) {
  std::string joined;
  joined.reserve(trace.full_text.size());
  for (const auto& t : trace.tokens) {
    if (!std::isfinite(t.logprob) || t.logprob > 0.0) return false;
    if (t.text.empty() && !t.special) return false;
    joined += t.text;
  }
  return joined == trace.full_text;
}

std::vector<std::string> validate_stage_record(const StageRecord& record) {
  std::vector<std::string> violations;
  const auto& parsed = record.parsed;
  const auto text_size = record.trace.full_text.size();

  if (record.sample_id.empty()) violations.emplace_back("missing sample id");
  if (record.trace.tokens.empty()) violations.emplace_back("trace has no tokens");
  if (!trace_is_consistent(record.trace)) {
    violations.emplace_back("trace tokens inconsistent with full text or logprob > 0");
  }
  if (record.reason_confidences.size() != parsed.reason_spans.size()) {
    violations.emplace_back("count mismatch: " + std::to_string(parsed.reason_spans.size()) +
                            " reasons, " + std::to_string(record.reason_confidences.size()) +
                            " confidences");
  }
  for (double c : record.reason_confidences) {
    if (!in_unit_interval(c)) {
      violations.emplace_back("confidence out of [0,1]: " + std::to_string(c));
      break;
    }
  }
  if (record.decision_confidence && !in_unit_interval(*record.decision_confidence)) {
    violations.emplace_back("confidence out of [0,1]: decision " +
                            std::to_string(*record.decision_confidence));
  }

  auto check_span = [&](const TextSpan& s, const char* what) {
    if (s.char_end > text_size || s.char_start > s.char_end) {
      violations.emplace_back(std::string("span out of bounds: ") + what);
    }
    if (s.aligned && (s.token_end > record.trace.tokens.size() || s.token_start > s.token_end)) {
      violations.emplace_back(std::string("token range out of bounds: ") + what);
    }
  };
  check_span(parsed.decision_span, "decision");
  for (const auto& s : parsed.decision_sentences) check_span(s, "decision sentence");
  for (const auto& s : parsed.reason_spans) check_span(s, "reason");

  std::size_t cursor = parsed.decision_span.char_end;
  for (const auto& s : parsed.reason_spans) {
    if (s.char_start < cursor) {
      violations.emplace_back("spans overlap or are out of document order");
      break;
    }
    cursor = s.char_end;
  }
  const bool refusal = parsed.decision_kind == DecisionKind::Refusal;
  if (parsed.decision_span.empty() && !refusal && parsed.reason_spans.empty()) {
    violations.emplace_back("empty decision without refusal");
  }
  return violations;
}

std::size_t utf8_length(std::string_view text) noexcept {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0u) != 0x80u) ++n;
  }
  return n;
}

std::string_view trim(std::string_view s) noexcept {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorKind::MissingLogprobs: return "MissingLogprobs";
    case ErrorKind::TokenTextMismatch: return "TokenTextMismatch";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::ScriptMiss: return "ScriptMiss";
    case ErrorKind::ProviderUnreachable: return "ProviderUnreachable";
    case ErrorKind::EmptyText: return "EmptyText";
    case ErrorKind::CacheMiss: return "CacheMiss";
    case ErrorKind::EmptyPairSet: return "EmptyPairSet";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyDecision: return "EmptyDecision";
    case ErrorKind::AlignmentImpossible: return "AlignmentImpossible";
    case ErrorKind::EmptyReasonList: return "EmptyReasonList";
    case ErrorKind::SingleReason: return "SingleReason";
    case ErrorKind::ZeroConfidenceMass: return "ZeroConfidenceMass";
    case ErrorKind::NoNewReasons: return "NoNewReasons";
    case ErrorKind::NonsensicalDecision: return "NonsensicalDecision";
    case ErrorKind::InvalidWeights: return "InvalidWeights";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::NoJustifyReasons: return "NoJustifyReasons";
    case ErrorKind::NecRequiresTwoReasons: return "NecRequiresTwoReasons";
    case ErrorKind::InvalidTemplate: return "InvalidTemplate";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::EmptyRun: return "EmptyRun";
    case ErrorKind::UnknownFormat: return "UnknownFormat";
    case ErrorKind::CorruptRecord: return "CorruptRecord";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace haf
