#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "haf/error.hpp"
#include "haf/reporting.hpp"

using namespace haf;
using Catch::Matchers::WithinAbs;

namespace {

MetricRecord record(const std::string& id, std::optional<double> sos, double conf = 0.5,
                    Stance stance = Stance::Toxic) {
  MetricRecord m;
  m.sample_id = id;
  m.source = "d";
  m.model_id = "m";
  m.stance = stance;
  m.stance_confidence = conf;
  m.sos = sos ? MetricValue::of(*sos) : MetricValue::absent(Absence::NoJustifyReasons);
  m.dis = MetricValue::absent(Absence::SingleReason);
  m.uii = MetricValue::absent(Absence::NoNewReasons);
  m.uei = MetricValue::of(0.2);
  m.rs = MetricValue::of(0.3);
  m.rn = MetricValue::absent(Absence::StanceMismatch);
  return m;
}

}  // namespace

TEST_CASE("aggregation means and absences", "[reporting]") {
  std::vector<MetricRecord> recs{record("a", 0.2), record("b", 0.4), record("c", std::nullopt)};
  const auto s = aggregate(recs);
  REQUIRE(s.groups.size() == 1);
  const auto& g = s.groups[0];
  CHECK(g.total == 3);
  const auto& sos = g.metrics.at("sos");
  CHECK_THAT(*sos.mean, WithinAbs(0.3, 1e-12));
  CHECK(sos.count == 2);
  CHECK(sos.absences.at(Absence::NoJustifyReasons) == 1);
  CHECK(g.metrics.at("uii").lower_is_better);
  CHECK_FALSE(g.metrics.at("uii").mean.has_value());
  for (const char* name : kMetricNames) {
    const auto& st = g.metrics.at(name);
    std::size_t absent = 0;
    for (const auto& [k, v] : st.absences) absent += v;
    CHECK(st.count + absent == g.total);
  }
}

TEST_CASE("empty runs are rejected", "[reporting]") {
  try {
    aggregate(std::vector<MetricRecord>{});
    FAIL("expected EmptyRun");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyRun);
  }
}

TEST_CASE("low support flag", "[reporting]") {
  std::vector<MetricRecord> recs;
  for (int i = 0; i < 20; ++i) recs.push_back(record("s" + std::to_string(i), i == 0 ? std::optional(0.5) : std::nullopt));
  const auto s = aggregate(recs);
  CHECK(s.groups[0].metrics.at("sos").low_support);
  CHECK_FALSE(s.groups[0].metrics.at("uei").low_support);
}

TEST_CASE("groups split by dataset and model", "[reporting]") {
  auto a = record("a", 0.1);
  auto b = record("b", 0.9);
  b.source = "other";
  auto c = record("c", 0.5);
  c.model_id = "n";
  std::vector<MetricRecord> recs{c, b, a};
  const auto s = aggregate(recs);
  REQUIRE(s.groups.size() == 3);
  CHECK(s.groups[0].dataset == "d");
  CHECK(s.groups[0].model == "m");
  CHECK(s.groups[1].model == "n");
  CHECK(s.groups[2].dataset == "other");
}

TEST_CASE("confidence tertiles", "[reporting]") {
  std::vector<MetricRecord> recs{record("a", 0.1, 0.1), record("b", 0.2, 0.5), record("c", 0.3, 0.9)};
  const auto cells = stance_breakdown(recs);
  REQUIRE(cells.size() == 3);
  CHECK(cells[0].bin == "low");
  CHECK(cells[1].bin == "medium");
  CHECK(cells[2].bin == "high");
  for (const auto& c : cells) CHECK(c.samples == 1);
  CHECK_THAT(*cells[2].sos.mean, WithinAbs(0.3, 1e-12));

  std::vector<MetricRecord> flat{record("a", 0.1, 0.4), record("b", 0.2, 0.4)};
  const auto one = stance_breakdown(flat);
  REQUIRE(one.size() == 1);
  CHECK(one[0].bin == "all");
  CHECK(one[0].samples == 2);
}

TEST_CASE("exports", "[reporting]") {
  std::vector<MetricRecord> recs{record("a", 0.2), record("b", 0.4)};
  const auto s = aggregate(recs);
  const auto csv = summary_to_csv(s);
  CHECK(csv.rfind("dataset,model,metric,mean,count,total", 0) == 0);
  CHECK(csv.find("d,m,sos,0.3") != std::string::npos);
  const auto md = summary_to_markdown(s);
  CHECK(md.find("| d | m |") != std::string::npos);
  const auto doc = summary_to_json(s);
  CHECK(doc["groups"][0]["dataset"] == "d");
  CHECK(export_summary(s, "csv") == csv);
  CHECK(export_summary(s, "md") == md);
  CHECK(nlohmann::json::parse(export_summary(s, "json")) == doc);
  try {
    export_summary(s, "xml");
    FAIL("expected UnknownFormat");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownFormat);
  }
}

TEST_CASE("summaries ignore record order", "[reporting]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricRecord> recs;
  for (int i = 0; i < 40; ++i) recs.push_back(record("s" + std::to_string(i), u(rng), u(rng)));
  const auto base = summary_to_csv(aggregate(recs)) + summary_to_markdown(aggregate(recs));
  for (int k = 0; k < 5; ++k) {
    std::shuffle(recs.begin(), recs.end(), rng);
    CHECK(summary_to_csv(aggregate(recs)) + summary_to_markdown(aggregate(recs)) == base);
  }
}
