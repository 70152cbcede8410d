#pragma once

#include <map>
#include <optional>
#include <string>

#include "haf/metrics.hpp"
#include "haf/model.hpp"
#include "haf/parsing.hpp"
#include "haf/similarity.hpp"
#include "haf/uncertainty.hpp"

namespace haf {

/// Turns a raw generation into a StageRecord: parse, classify, align, and
/// score every reason and the decision.
StageRecord analyze_stage(const std::string& sample_id, StageKind stage, const std::string& prompt,
                          GenerationTrace trace, const std::string& model_id, const ClassifierRules& rules,
                          SimilarityProvider& sim, DecisionConfidenceMode mode);

/// Every stage record persisted for one sample. Missing entries mean the
/// stage was never run or failed.
struct SampleStages {
  std::optional<StageRecord> justify;
  std::optional<StageRecord> internal;
  std::optional<StageRecord> external;
  std::map<std::size_t, StageRecord> sufficiency;  // keyed by held-in reason
  std::map<std::size_t, StageRecord> necessity;    // keyed by left-out reason

  void put(StageRecord record);
};

/// Computes all six metrics with factor records and absence reasons.
/// Metric-level failures become absences; provider errors propagate.
MetricRecord score_sample(const InputSample& sample, const SampleStages& stages, SimilarityProvider& sim,
                          const MetricWeights& weights);

}  // namespace haf
