#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "haf/model.hpp"

namespace haf {

/// How RS is scored when the sufficiency probe produced no new reasons.
enum class RsEmptySetRule {
  WeightedConfidence,  // w_S * C(Y)
  RawConfidence,       // C(Y)
};

struct MetricWeights {
  double w_c_justify = 0.8;
  double w_g_justify = 0.2;
  double w_c_uphold = 0.5;
  double w_g_uphold = 0.5;
  std::map<DecisionKind, double> w_s{
      {DecisionKind::Sufficient, 1.0}, {DecisionKind::Doubtful, 0.5}, {DecisionKind::Insufficient, 0.1}};
  std::map<DecisionKind, double> w_n{
      {DecisionKind::Insufficient, 1.0}, {DecisionKind::Doubtful, 0.5}, {DecisionKind::Sufficient, 0.1}};
  RsEmptySetRule rs_empty_set = RsEmptySetRule::WeightedConfidence;

  /// Throws InvalidWeights: pairs must sum to 1, every weight in [0,1], and
  /// both maps must cover Sufficient, Doubtful and Insufficient.
  void validate() const;

  double sufficiency_weight(DecisionKind k) const;
  double necessity_weight(DecisionKind k) const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults. Validates the result.
  static MetricWeights from_json(const nlohmann::json& doc);

  bool operator==(const MetricWeights&) const = default;
};

struct ReasonSupport {
  double confidence = 0.0;        // C(r)
  double input_similarity = 0.0;  // g(r, d_in)
};

/// Strength of support: mean of w_c*C + w_g*g. Throws EmptyReasonList.
double sos(std::span<const ReasonSupport> reasons, const MetricWeights& weights);

/// Diversity in support over ordered pairs i != j of h[i][j] * C[j], divided
/// by n(n-1). `h` must be n x n; the diagonal is ignored. Throws SingleReason
/// for n < 2 and LengthMismatch for a badly shaped matrix.
double dis(std::span<const double> confidences, const std::vector<std::vector<double>>& h);

/// Confidence-weighted mean diversity of one new reason against a reason
/// set. Throws LengthMismatch, EmptyReasonList or ZeroConfidenceMass.
double div(std::span<const double> diversities, std::span<const double> confidences);

struct NewReason {
  double confidence = 0.0;
  double div = 0.0;
};

/// Mean of w_c*C + w_g*div over new reasons. Throws NoNewReasons.
double uii_or_uei(std::span<const NewReason> new_reasons, const MetricWeights& weights);

/// (1 / 2|S|) * sum(C + div). Zero for an empty set.
double informativeness_suf(std::span<const NewReason> new_reasons);

struct NecessityEvidence {
  double confidence = 0.0;           // C(s_k)
  double leftout_similarity = 0.0;   // g(s_k, r_j)
  double leftout_confidence = 0.0;   // C(r_j) from the justify stage
};

/// (1 / 2|S|) * sum(C + g * C_leftout). Zero for an empty set.
double informativeness_nec(std::span<const NecessityEvidence> new_reasons);

struct FactorScore {
  double value = 0.0;
  double weight = 0.0;
  double decision_confidence = 0.0;
  double informativeness = 0.0;
  std::size_t new_reasons = 0;
};

/// w_S * C(Y) * (1 - I_S). Throws NonsensicalDecision for Nonsensical or
/// Refusal decisions.
FactorScore rs(DecisionKind kind, double decision_confidence, std::span<const NewReason> new_reasons,
               const MetricWeights& weights);

/// w_N * C(Y) * I_N; zero when there are no new reasons.
FactorScore rn(DecisionKind kind, double decision_confidence, std::span<const NecessityEvidence> new_reasons,
               const MetricWeights& weights);

}  // namespace haf
