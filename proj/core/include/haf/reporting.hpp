#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "haf/model.hpp"

namespace haf {

inline constexpr const char* kMetricNames[] = {"sos", "dis", "uii", "uei", "rs", "rn"};

struct MetricStat {
  std::optional<double> mean;
  std::size_t count = 0;  // samples contributing a value
  std::map<Absence, std::size_t> absences;
  bool low_support = false;      // count below 10% of the group's samples
  bool lower_is_better = false;  // UII and UEI
};

/// numerator / denominator as a percentage; absent when the denominator is 0.
struct Rate {
  std::size_t numerator = 0;
  std::size_t denominator = 0;
  std::optional<double> percent() const;
};

struct FactorStat {
  std::size_t entries = 0;
  std::optional<double> mean_weight;
  std::optional<double> mean_decision_confidence;
  std::optional<double> mean_informativeness;
  std::optional<double> mean_value;
};

/// One cell of the stance by decision-confidence breakdown.
struct BreakdownCell {
  Stance stance = Stance::Unresolved;
  std::string bin;  // "low", "medium", "high", or "all" when every confidence is equal
  std::size_t samples = 0;
  MetricStat sos;
  MetricStat dis;
};

struct GroupSummary {
  std::string dataset;
  std::string model;
  std::size_t total = 0;
  std::size_t refusals = 0;
  std::map<std::string, MetricStat> metrics;  // keyed by kMetricNames
  Rate sufficient_internal;
  Rate sufficient_external;
  std::map<std::string, Rate> nonsensical;  // "internal", "external", "sufficiency", "necessity"
  FactorStat rs_factors;
  FactorStat rn_factors;
  std::map<Stance, std::size_t> stances;
  std::vector<BreakdownCell> breakdown;
};

struct RunSummary {
  std::vector<GroupSummary> groups;  // sorted by (dataset, model)
};

/// Groups by (source, model) and summarises every metric. Order-independent:
/// values are summed in sorted order. Throws EmptyRun.
RunSummary aggregate(std::span<const MetricRecord> records);

/// SoS and DiS by stance and decision-confidence tertile. A sample's bin is
/// floor(3 * rank / n) where rank counts strictly smaller confidences.
/// Samples without a stance confidence are left out.
std::vector<BreakdownCell> stance_breakdown(std::span<const MetricRecord> records);

nlohmann::json summary_to_json(const RunSummary& summary);
std::string summary_to_csv(const RunSummary& summary);
std::string summary_to_markdown(const RunSummary& summary);

/// "json", "csv" or "md"; anything else throws UnknownFormat.
std::string export_summary(const RunSummary& summary, const std::string& format);

}  // namespace haf
