#include "haf/metrics.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

namespace {

constexpr double kSumTolerance = 1e-9;

void require_unit(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + " must lie in [0,1], got " + std::to_string(v));
  }
}

void check_weight(double v, const std::string& name) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw Error(ErrorKind::InvalidWeights, name + " must lie in [0,1]");
  }
}

void check_map(const std::map<DecisionKind, double>& m, const char* name) {
  for (auto k : {DecisionKind::Sufficient, DecisionKind::Doubtful, DecisionKind::Insufficient}) {
    auto it = m.find(k);
    if (it == m.end()) {
      throw Error(ErrorKind::InvalidWeights, std::string(name) + " lacks " + std::string(to_string(k)));
    }
    check_weight(it->second, std::string(name) + "." + std::string(to_string(k)));
  }
  for (const auto& [k, v] : m) {
    if (k == DecisionKind::Nonsensical || k == DecisionKind::Refusal) {
      throw Error(ErrorKind::InvalidWeights, std::string(name) + " cannot weight " + std::string(to_string(k)));
    }
  }
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::map<DecisionKind, double> map_from_json(const json& doc, std::map<DecisionKind, double> base) {
  for (const auto& [name, value] : doc.items()) {
    auto kind = decision_kind_from_string(name);
    if (!kind) throw Error(ErrorKind::InvalidWeights, "unknown decision kind '" + name + "'");
    base[*kind] = value.get<double>();
  }
  return base;
}

}  // namespace

void MetricWeights::validate() const {
  check_weight(w_c_justify, "w_c_justify");
  check_weight(w_g_justify, "w_g_justify");
  check_weight(w_c_uphold, "w_c_uphold");
  check_weight(w_g_uphold, "w_g_uphold");
  if (std::abs(w_c_justify + w_g_justify - 1.0) > kSumTolerance) {
    throw Error(ErrorKind::InvalidWeights, "w_c_justify + w_g_justify must equal 1");
  }
  if (std::abs(w_c_uphold + w_g_uphold - 1.0) > kSumTolerance) {
    throw Error(ErrorKind::InvalidWeights, "w_c_uphold + w_g_uphold must equal 1");
  }
  check_map(w_s, "w_s");
  check_map(w_n, "w_n");
}

double MetricWeights::sufficiency_weight(DecisionKind k) const {
  auto it = w_s.find(k);
  if (it == w_s.end()) throw Error(ErrorKind::NonsensicalDecision, "no sufficiency weight for this decision");
  return it->second;
}

double MetricWeights::necessity_weight(DecisionKind k) const {
  auto it = w_n.find(k);
  if (it == w_n.end()) throw Error(ErrorKind::NonsensicalDecision, "no necessity weight for this decision");
  return it->second;
}

json MetricWeights::to_json() const {
  json doc;
  doc["w_c_justify"] = w_c_justify;
  doc["w_g_justify"] = w_g_justify;
  doc["w_c_uphold"] = w_c_uphold;
  doc["w_g_uphold"] = w_g_uphold;
  doc["w_s"] = json::object();
  for (const auto& [k, v] : w_s) doc["w_s"][std::string(to_string(k))] = v;
  doc["w_n"] = json::object();
  for (const auto& [k, v] : w_n) doc["w_n"][std::string(to_string(k))] = v;
  doc["rs_empty_set"] = rs_empty_set == RsEmptySetRule::WeightedConfidence ? "weighted" : "raw";
  return doc;
}

MetricWeights MetricWeights::from_json(const json& doc) {
  MetricWeights w;
  try {
    if (!doc.is_object()) throw Error(ErrorKind::InvalidWeights, "weights must be a JSON object");
    // Setting only one side of a pair implies the other.
    if (doc.contains("w_c_justify") && !doc.contains("w_g_justify")) {
      w.w_c_justify = doc.at("w_c_justify").get<double>();
      w.w_g_justify = 1.0 - w.w_c_justify;
    } else if (doc.contains("w_g_justify") && !doc.contains("w_c_justify")) {
      w.w_g_justify = doc.at("w_g_justify").get<double>();
      w.w_c_justify = 1.0 - w.w_g_justify;
    } else {
      w.w_c_justify = doc.value("w_c_justify", w.w_c_justify);
      w.w_g_justify = doc.value("w_g_justify", w.w_g_justify);
    }
    if (doc.contains("w_c_uphold") && !doc.contains("w_g_uphold")) {
      w.w_c_uphold = doc.at("w_c_uphold").get<double>();
      w.w_g_uphold = 1.0 - w.w_c_uphold;
    } else if (doc.contains("w_g_uphold") && !doc.contains("w_c_uphold")) {
      w.w_g_uphold = doc.at("w_g_uphold").get<double>();
      w.w_c_uphold = 1.0 - w.w_g_uphold;
    } else {
      w.w_c_uphold = doc.value("w_c_uphold", w.w_c_uphold);
      w.w_g_uphold = doc.value("w_g_uphold", w.w_g_uphold);
    }
    if (doc.contains("w_s")) w.w_s = map_from_json(doc.at("w_s"), w.w_s);
    if (doc.contains("w_n")) w.w_n = map_from_json(doc.at("w_n"), w.w_n);
    if (doc.contains("rs_empty_set")) {
      const auto rule = doc.at("rs_empty_set").get<std::string>();
      if (rule == "weighted") w.rs_empty_set = RsEmptySetRule::WeightedConfidence;
      else if (rule == "raw") w.rs_empty_set = RsEmptySetRule::RawConfidence;
      else throw Error(ErrorKind::InvalidWeights, "rs_empty_set must be 'weighted' or 'raw'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidWeights, e.what());
  }
  w.validate();
  return w;
}

double sos(std::span<const ReasonSupport> reasons, const MetricWeights& weights) {
  if (reasons.empty()) throw Error(ErrorKind::EmptyReasonList, "no reasons to score");
  double total = 0.0;
  for (const auto& r : reasons) {
    require_unit(r.confidence, "confidence");
    require_unit(r.input_similarity, "similarity");
    total += weights.w_c_justify * r.confidence + weights.w_g_justify * r.input_similarity;
  }
  return clamp01(total / static_cast<double>(reasons.size()));
}

double dis(std::span<const double> confidences, const std::vector<std::vector<double>>& h) {
  const auto n = confidences.size();
  if (n < 2) throw Error(ErrorKind::SingleReason, "diversity needs at least two reasons");
  if (h.size() != n) throw Error(ErrorKind::LengthMismatch, "diversity matrix has wrong row count");
  for (const auto& row : h) {
    if (row.size() != n) throw Error(ErrorKind::LengthMismatch, "diversity matrix is not square");
  }
  for (double c : confidences) require_unit(c, "confidence");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      require_unit(h[i][j], "diversity");
      total += h[i][j] * confidences[j];
    }
  }
  return clamp01(total / static_cast<double>(n * (n - 1)));
}

double div(std::span<const double> diversities, std::span<const double> confidences) {
  if (diversities.size() != confidences.size()) {
    throw Error(ErrorKind::LengthMismatch, "diversity and confidence lists differ in length");
  }
  if (diversities.empty()) throw Error(ErrorKind::EmptyReasonList, "no reasons to compare against");
  double num = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < diversities.size(); ++k) {
    require_unit(diversities[k], "diversity");
    require_unit(confidences[k], "confidence");
    num += diversities[k] * confidences[k];
    mass += confidences[k];
  }
  if (mass <= 0.0) throw Error(ErrorKind::ZeroConfidenceMass, "reason confidences sum to zero");
  return clamp01(num / mass);
}

double uii_or_uei(std::span<const NewReason> new_reasons, const MetricWeights& weights) {
  if (new_reasons.empty()) throw Error(ErrorKind::NoNewReasons, "no new reasons");
  double total = 0.0;
  for (const auto& r : new_reasons) {
    require_unit(r.confidence, "confidence");
    require_unit(r.div, "div");
    total += weights.w_c_uphold * r.confidence + weights.w_g_uphold * r.div;
  }
  return clamp01(total / static_cast<double>(new_reasons.size()));
}

double informativeness_suf(std::span<const NewReason> new_reasons) {
  if (new_reasons.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : new_reasons) {
    require_unit(r.confidence, "confidence");
    require_unit(r.div, "div");
    total += r.confidence + r.div;
  }
  return clamp01(total / (2.0 * static_cast<double>(new_reasons.size())));
}

double informativeness_nec(std::span<const NecessityEvidence> new_reasons) {
  if (new_reasons.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : new_reasons) {
    require_unit(r.confidence, "confidence");
    require_unit(r.leftout_similarity, "similarity");
    require_unit(r.leftout_confidence, "left-out confidence");
    total += r.confidence + r.leftout_similarity * r.leftout_confidence;
  }
  return clamp01(total / (2.0 * static_cast<double>(new_reasons.size())));
}

FactorScore rs(DecisionKind kind, double decision_confidence, std::span<const NewReason> new_reasons,
               const MetricWeights& weights) {
  if (kind == DecisionKind::Nonsensical || kind == DecisionKind::Refusal) {
    throw Error(ErrorKind::NonsensicalDecision, "decision does not address sufficiency");
  }
  require_unit(decision_confidence, "decision confidence");
  FactorScore f;
  f.weight = weights.sufficiency_weight(kind);
  f.decision_confidence = decision_confidence;
  f.new_reasons = new_reasons.size();
  if (new_reasons.empty()) {
    f.informativeness = 0.0;
    f.value = weights.rs_empty_set == RsEmptySetRule::WeightedConfidence ? f.weight * decision_confidence
                                                                          : decision_confidence;
  } else {
    f.informativeness = informativeness_suf(new_reasons);
    f.value = f.weight * decision_confidence * (1.0 - f.informativeness);
  }
  f.value = clamp01(f.value);
  return f;
}

FactorScore rn(DecisionKind kind, double decision_confidence, std::span<const NecessityEvidence> new_reasons,
               const MetricWeights& weights) {
  if (kind == DecisionKind::Nonsensical || kind == DecisionKind::Refusal) {
    throw Error(ErrorKind::NonsensicalDecision, "decision does not address necessity");
  }
  require_unit(decision_confidence, "decision confidence");
  FactorScore f;
  f.weight = weights.necessity_weight(kind);
  f.decision_confidence = decision_confidence;
  f.new_reasons = new_reasons.size();
  f.informativeness = informativeness_nec(new_reasons);
  f.value = clamp01(f.weight * decision_confidence * f.informativeness);
  return f;
}

}  // namespace haf
