#include "haf/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include <nlohmann/json.hpp>

#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

std::optional<double> Rate::percent() const {
  if (denominator == 0) return std::nullopt;
  return 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator);
}

namespace {

constexpr Absence kAbsences[] = {Absence::NoNewReasons,   Absence::Refusal,          Absence::SingleReason,
                                 Absence::StanceMismatch, Absence::NoJustifyReasons, Absence::Nonsensical,
                                 Absence::StageError};

/// Mean summed in sorted order so the result does not depend on record order.
std::optional<double> stable_mean(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

const MetricValue& metric_of(const MetricRecord& r, std::string_view name) {
  if (name == "sos") return r.sos;
  if (name == "dis") return r.dis;
  if (name == "uii") return r.uii;
  if (name == "uei") return r.uei;
  if (name == "rs") return r.rs;
  return r.rn;
}

MetricStat summarise(const std::vector<const MetricRecord*>& records, std::string_view name, std::size_t total) {
  MetricStat s;
  s.lower_is_better = name == "uii" || name == "uei";
  std::vector<double> values;
  for (const auto* r : records) {
    const auto& v = metric_of(*r, name);
    if (v.value) values.push_back(*v.value);
    else ++s.absences[v.absence.value_or(Absence::StageError)];
  }
  s.count = values.size();
  s.mean = stable_mean(std::move(values));
  s.low_support = static_cast<double>(s.count) < 0.1 * static_cast<double>(total);
  return s;
}

template <class Entry>
FactorStat factors(const std::vector<const MetricRecord*>& records,
                   const std::vector<Entry> MetricRecord::*member) {
  std::vector<double> w, c, i, v;
  for (const auto* r : records) {
    for (const auto& e : r->*member) {
      w.push_back(e.weight);
      c.push_back(e.decision_confidence);
      i.push_back(e.informativeness);
      v.push_back(e.value);
    }
  }
  FactorStat f;
  f.entries = v.size();
  f.mean_weight = stable_mean(std::move(w));
  f.mean_decision_confidence = stable_mean(std::move(c));
  f.mean_informativeness = stable_mean(std::move(i));
  f.mean_value = stable_mean(std::move(v));
  return f;
}

Rate probe_rate(const std::vector<const MetricRecord*>& records, bool sufficiency) {
  Rate rate;
  for (const auto* r : records) {
    if (sufficiency) {
      rate.denominator += r->rs_entries.size();
      for (const auto& s : r->rs_skipped) {
        if (s.reason == Absence::StageError) continue;
        ++rate.denominator;
        if (s.reason == Absence::Nonsensical) ++rate.numerator;
      }
    } else {
      rate.denominator += r->rn_entries.size();
      for (const auto& s : r->rn_skipped) {
        if (s.reason == Absence::StageError) continue;
        ++rate.denominator;
        if (s.reason == Absence::Nonsensical) ++rate.numerator;
      }
    }
  }
  return rate;
}

Rate decision_rate(const std::vector<const MetricRecord*>& records,
                   std::optional<DecisionKind> MetricRecord::*member, DecisionKind kind) {
  Rate rate;
  for (const auto* r : records) {
    const auto& d = r->*member;
    if (!d) continue;
    ++rate.denominator;
    if (*d == kind) ++rate.numerator;
  }
  return rate;
}

std::vector<BreakdownCell> breakdown_of(const std::vector<const MetricRecord*>& records) {
  std::vector<const MetricRecord*> eligible;
  for (const auto* r : records) {
    if (r->stance_confidence && !r->refusal) eligible.push_back(r);
  }
  std::vector<double> confs;
  for (const auto* r : eligible) confs.push_back(*r->stance_confidence);
  const bool degenerate =
      !confs.empty() && std::all_of(confs.begin(), confs.end(), [&](double c) { return c == confs.front(); });

  static const char* kBins[] = {"low", "medium", "high"};
  std::map<std::pair<Stance, std::string>, std::vector<const MetricRecord*>> cells;
  const auto n = confs.size();
  for (const auto* r : eligible) {
    std::string bin = "all";
    if (!degenerate) {
      const auto c = *r->stance_confidence;
      const auto rank = static_cast<std::size_t>(std::count_if(confs.begin(), confs.end(), [&](double x) { return x < c; }));
      bin = kBins[std::min<std::size_t>(2, 3 * rank / n)];
    }
    cells[{r->stance, bin}].push_back(r);
  }

  auto bin_order = [](const std::string& b) {
    if (b == "low") return 0;
    if (b == "medium") return 1;
    if (b == "high") return 2;
    return 3;
  };
  std::vector<BreakdownCell> out;
  for (const auto& [key, members] : cells) {
    BreakdownCell cell;
    cell.stance = key.first;
    cell.bin = key.second;
    cell.samples = members.size();
    cell.sos = summarise(members, "sos", members.size());
    cell.dis = summarise(members, "dis", members.size());
    out.push_back(std::move(cell));
  }
  std::stable_sort(out.begin(), out.end(), [&](const BreakdownCell& a, const BreakdownCell& b) {
    return std::pair(a.stance, bin_order(a.bin)) < std::pair(b.stance, bin_order(b.bin));
  });
  return out;
}

std::vector<const MetricRecord*> pointers(std::span<const MetricRecord> records) {
  std::vector<const MetricRecord*> out;
  for (const auto& r : records) out.push_back(&r);
  return out;
}

}  // namespace

std::vector<BreakdownCell> stance_breakdown(std::span<const MetricRecord> records) {
  return breakdown_of(pointers(records));
}

RunSummary aggregate(std::span<const MetricRecord> records) {
  if (records.empty()) throw Error(ErrorKind::EmptyRun, "no metric records");
  std::map<std::pair<std::string, std::string>, std::vector<const MetricRecord*>> groups;
  for (const auto& r : records) groups[{r.source, r.model_id}].push_back(&r);

  RunSummary summary;
  for (const auto& [key, members] : groups) {
    GroupSummary g;
    g.dataset = key.first;
    g.model = key.second;
    g.total = members.size();
    for (const char* name : kMetricNames) g.metrics[name] = summarise(members, name, g.total);
    for (const auto* r : members) {
      ++g.stances[r->stance];
      if (r->refusal) ++g.refusals;
    }
    g.sufficient_internal = decision_rate(members, &MetricRecord::internal_decision, DecisionKind::Sufficient);
    g.sufficient_external = decision_rate(members, &MetricRecord::external_decision, DecisionKind::Sufficient);
    g.nonsensical["internal"] = decision_rate(members, &MetricRecord::internal_decision, DecisionKind::Nonsensical);
    g.nonsensical["external"] = decision_rate(members, &MetricRecord::external_decision, DecisionKind::Nonsensical);
    g.nonsensical["sufficiency"] = probe_rate(members, true);
    g.nonsensical["necessity"] = probe_rate(members, false);
    g.rs_factors = factors(members, &MetricRecord::rs_entries);
    g.rn_factors = factors(members, &MetricRecord::rn_entries);
    g.breakdown = breakdown_of(members);
    summary.groups.push_back(std::move(g));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// export

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stat_json(const MetricStat& s) {
  json absences = json::object();
  for (const auto& [a, n] : s.absences) absences[std::string(to_string(a))] = n;
  return {{"mean", opt(s.mean)},
          {"count", s.count},
          {"absences", absences},
          {"low_support", s.low_support},
          {"direction", s.lower_is_better ? "lower_is_better" : "higher_is_better"}};
}

json rate_json(const Rate& r) {
  return {{"numerator", r.numerator}, {"denominator", r.denominator}, {"percent", opt(r.percent())}};
}

json factor_json(const FactorStat& f) {
  return {{"entries", f.entries},
          {"mean_weight", opt(f.mean_weight)},
          {"mean_decision_confidence", opt(f.mean_decision_confidence)},
          {"mean_informativeness", opt(f.mean_informativeness)},
          {"mean_value", opt(f.mean_value)}};
}

std::string fixed(const std::optional<double>& v, int digits = 4) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out.push_back(c);
  }
  return out;
}

std::string label(const char* metric) {
  static const std::map<std::string, std::string> names{{"sos", "SoS"}, {"dis", "DiS"}, {"uii", "UII"},
                                                        {"uei", "UEI"}, {"rs", "RS"},   {"rn", "RN"}};
  return names.at(metric);
}

std::string percent_cell(const Rate& r) {
  if (!r.percent()) return "n/a";
  return fixed(r.percent(), 1) + "% (" + std::to_string(r.numerator) + "/" + std::to_string(r.denominator) + ")";
}

}  // namespace

json summary_to_json(const RunSummary& summary) {
  json groups = json::array();
  for (const auto& g : summary.groups) {
    json doc;
    doc["dataset"] = g.dataset;
    doc["model"] = g.model;
    doc["total"] = g.total;
    doc["refusals"] = g.refusals;
    doc["metrics"] = json::object();
    for (const auto& [name, s] : g.metrics) doc["metrics"][name] = stat_json(s);
    doc["sufficient_at_uphold_reason"] = {{"internal", rate_json(g.sufficient_internal)},
                                          {"external", rate_json(g.sufficient_external)}};
    doc["nonsensical"] = json::object();
    for (const auto& [stage, r] : g.nonsensical) doc["nonsensical"][stage] = rate_json(r);
    doc["factors"] = {{"rs", factor_json(g.rs_factors)}, {"rn", factor_json(g.rn_factors)}};
    doc["stances"] = json::object();
    for (const auto& [s, n] : g.stances) doc["stances"][std::string(to_string(s))] = n;
    doc["breakdown"] = json::array();
    for (const auto& c : g.breakdown) {
      doc["breakdown"].push_back({{"stance", std::string(to_string(c.stance))},
                                  {"bin", c.bin},
                                  {"samples", c.samples},
                                  {"sos", stat_json(c.sos)},
                                  {"dis", stat_json(c.dis)}});
    }
    groups.push_back(std::move(doc));
  }
  return {{"groups", std::move(groups)}};
}

std::string summary_to_csv(const RunSummary& summary) {
  std::string out = "dataset,model,metric,mean,count,total,low_support,direction";
  for (auto a : kAbsences) out += ",absent_" + std::string(to_string(a));
  out += "\n";
  for (const auto& g : summary.groups) {
    for (const char* name : kMetricNames) {
      const auto& s = g.metrics.at(name);
      out += csv_field(g.dataset) + "," + csv_field(g.model) + "," + name + "," + fixed(s.mean, 6) + "," +
             std::to_string(s.count) + "," + std::to_string(g.total) + "," + (s.low_support ? "true" : "false") +
             "," + (s.lower_is_better ? "lower_is_better" : "higher_is_better");
      for (auto a : kAbsences) {
        auto it = s.absences.find(a);
        out += "," + std::to_string(it == s.absences.end() ? 0 : it->second);
      }
      out += "\n";
    }
  }
  return out;
}

std::string summary_to_markdown(const RunSummary& summary) {
  std::string out = "# HAF summary\n\n";

  out += "## Metrics\n\nMean (count). Higher is better except for UII and UEI. `*` marks support below 10% of samples.\n\n";
  out += "| Dataset | Model | Samples |";
  for (const char* m : kMetricNames) out += " " + label(m) + (std::string_view(m) == "uii" || std::string_view(m) == "uei" ? " ↓" : " ↑") + " |";
  out += "\n|---|---|---:|";
  for (std::size_t i = 0; i < std::size(kMetricNames); ++i) out += "---:|";
  out += "\n";
  for (const auto& g : summary.groups) {
    out += "| " + md_cell(g.dataset) + " | " + md_cell(g.model) + " | " + std::to_string(g.total) + " |";
    for (const char* m : kMetricNames) {
      const auto& s = g.metrics.at(m);
      out += " " + (s.mean ? fixed(s.mean) : std::string("–")) + " (" + std::to_string(s.count) + ")" +
             (s.low_support ? "*" : "") + " |";
    }
    out += "\n";
  }

  out += "\n## Absent metrics\n\n| Dataset | Model | Metric |";
  for (auto a : kAbsences) out += " " + std::string(to_string(a)) + " |";
  out += "\n|---|---|---|";
  for (std::size_t i = 0; i < std::size(kAbsences); ++i) out += "---:|";
  out += "\n";
  for (const auto& g : summary.groups) {
    for (const char* m : kMetricNames) {
      const auto& s = g.metrics.at(m);
      out += "| " + md_cell(g.dataset) + " | " + md_cell(g.model) + " | " + label(m) + " |";
      for (auto a : kAbsences) {
        auto it = s.absences.find(a);
        out += " " + std::to_string(it == s.absences.end() ? 0 : it->second) + " |";
      }
      out += "\n";
    }
  }

  out += "\n## Sufficient decisions at uphold-reason\n\n| Dataset | Model | Internal | External |\n|---|---|---:|---:|\n";
  for (const auto& g : summary.groups) {
    out += "| " + md_cell(g.dataset) + " | " + md_cell(g.model) + " | " + percent_cell(g.sufficient_internal) +
           " | " + percent_cell(g.sufficient_external) + " |\n";
  }

  out += "\n## Nonsensical decisions\n\n| Dataset | Model | Internal | External | Sufficiency | Necessity |\n"
         "|---|---|---:|---:|---:|---:|\n";
  for (const auto& g : summary.groups) {
    out += "| " + md_cell(g.dataset) + " | " + md_cell(g.model) + " | " + percent_cell(g.nonsensical.at("internal")) +
           " | " + percent_cell(g.nonsensical.at("external")) + " | " +
           percent_cell(g.nonsensical.at("sufficiency")) + " | " + percent_cell(g.nonsensical.at("necessity")) +
           " |\n";
  }

  out += "\n## RS and RN factors\n\n| Dataset | Model | Metric | Entries | Weight | Decision confidence | "
         "Informativeness | Value |\n|---|---|---|---:|---:|---:|---:|---:|\n";
  for (const auto& g : summary.groups) {
    for (const auto& [name, f] : {std::pair{"RS", &g.rs_factors}, std::pair{"RN", &g.rn_factors}}) {
      out += "| " + md_cell(g.dataset) + " | " + md_cell(g.model) + " | " + name + " | " + std::to_string(f->entries) +
             " | " + fixed(f->mean_weight) + " | " + fixed(f->mean_decision_confidence) + " | " +
             fixed(f->mean_informativeness) + " | " + fixed(f->mean_value) + " |\n";
    }
  }

  out += "\n## Stance and confidence\n\n| Dataset | Model | Stance | Confidence | Samples | SoS | DiS |\n"
         "|---|---|---|---|---:|---:|---:|\n";
  for (const auto& g : summary.groups) {
    for (const auto& c : g.breakdown) {
      out += "| " + md_cell(g.dataset) + " | " + md_cell(g.model) + " | " + std::string(to_string(c.stance)) + " | " +
             c.bin + " | " + std::to_string(c.samples) + " | " +
             (c.sos.mean ? fixed(c.sos.mean) : std::string("–")) + " (" + std::to_string(c.sos.count) + ") | " +
             (c.dis.mean ? fixed(c.dis.mean) : std::string("–")) + " (" + std::to_string(c.dis.count) + ") |\n";
    }
  }
  return out;
}

std::string export_summary(const RunSummary& summary, const std::string& format) {
  if (format == "json") return summary_to_json(summary).dump(2) + "\n";
  if (format == "csv") return summary_to_csv(summary);
  if (format == "md") return summary_to_markdown(summary);
  throw Error(ErrorKind::UnknownFormat, "unknown report format '" + format + "' (expected json, csv or md)");
}

}  // namespace haf
