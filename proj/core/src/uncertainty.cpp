#include "haf/uncertainty.hpp"

#include <cmath>
#include <string>

#include "haf/error.hpp"

namespace haf {

UncertaintyScore span_uncertainty(std::span<const TokenRecord> tokens, const RelevanceVector& relevance) {
  if (relevance.normalized.size() != tokens.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(tokens.size()) + " tokens vs " +
                                               std::to_string(relevance.normalized.size()) +
                                               " relevance weights");
  }
  double u = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) u += -tokens[i].logprob * relevance.normalized[i];
  // -0.0 * w and rounding can leave a tiny negative; entropy is non-negative.
  if (u < 0.0) u = 0.0;
  return {u, std::exp(-u)};
}

double decision_confidence(std::span<const SentenceEvidence> sentences) {
  if (sentences.empty()) throw Error(ErrorKind::EmptyDecision, "decision has no sentences");
  double total = 0.0;
  for (const auto& s : sentences) total += span_uncertainty(s.tokens, s.relevance).confidence;
  return total / static_cast<double>(sentences.size());
}

namespace {

std::span<const TokenRecord> token_slice(const GenerationTrace& trace, const TextSpan& span) {
  if (!span.aligned) throw Error(ErrorKind::AlignmentImpossible, "span has no token range");
  return std::span<const TokenRecord>(trace.tokens).subspan(span.token_start, span.token_end - span.token_start);
}

RelevanceVector relevance_for(std::span<const TokenRecord> slice, SimilarityProvider& provider) {
  std::vector<std::string> texts;
  texts.reserve(slice.size());
  std::string joined;
  for (const auto& t : slice) {
    texts.push_back(t.text);
    joined += t.text;
  }
  return token_relevance(provider, joined, texts);
}

}  // namespace

UncertaintyScore score_span(const GenerationTrace& trace, const TextSpan& span, SimilarityProvider& provider) {
  const auto slice = token_slice(trace, span);
  if (slice.empty()) return {};
  return span_uncertainty(slice, relevance_for(slice, provider));
}

std::optional<double> score_decision(const GenerationTrace& trace, const ParsedExplanation& parsed,
                                     SimilarityProvider& provider, DecisionConfidenceMode mode) {
  if (parsed.decision_span.empty()) return std::nullopt;
  if (mode == DecisionConfidenceMode::Concatenated || parsed.decision_sentences.empty()) {
    return score_span(trace, parsed.decision_span, provider).confidence;
  }
  std::vector<SentenceEvidence> evidence;
  evidence.reserve(parsed.decision_sentences.size());
  for (const auto& s : parsed.decision_sentences) {
    const auto slice = token_slice(trace, s);
    evidence.push_back({slice, relevance_for(slice, provider)});
  }
  return decision_confidence(evidence);
}

}  // namespace haf
