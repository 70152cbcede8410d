#pragma once

#include <span>
#include <vector>

#include "haf/model.hpp"
#include "haf/similarity.hpp"

namespace haf {

/// Relevance-weighted predictive entropy U >= 0 and confidence C = exp(-U).
struct UncertaintyScore {
  double uncertainty = 0.0;
  double confidence = 1.0;
};

/// U = sum_i (-logprob_i) * normalized_i. Throws LengthMismatch when the
/// relevance vector does not match the token slice.
UncertaintyScore span_uncertainty(std::span<const TokenRecord> tokens, const RelevanceVector& relevance);

struct SentenceEvidence {
  std::span<const TokenRecord> tokens;
  RelevanceVector relevance;
};

/// Arithmetic mean of per-sentence confidences. Throws EmptyDecision.
double decision_confidence(std::span<const SentenceEvidence> sentences);

enum class DecisionConfidenceMode {
  PerSentenceMean,  // default
  Concatenated,     // whole decision span treated as one unit
};

/// Relevance + uncertainty for one aligned span of a trace.
UncertaintyScore score_span(const GenerationTrace& trace, const TextSpan& span, SimilarityProvider& provider);

/// Confidence in a parsed decision. Returns nullopt for an empty decision.
std::optional<double> score_decision(const GenerationTrace& trace, const ParsedExplanation& parsed,
                                     SimilarityProvider& provider, DecisionConfidenceMode mode);

}  // namespace haf
