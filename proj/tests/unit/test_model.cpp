#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "haf/error.hpp"
#include "haf/model.hpp"
#include "support/helpers.hpp"

using namespace haf;

TEST_CASE("utf8 length counts scalar values", "[model]") {
  CHECK(utf8_length("") == 0);
  CHECK(utf8_length("abc") == 3);
  CHECK(utf8_length("caf\xc3\xa9") == 4);
  CHECK(utf8_length("\xf0\x9f\x98\x80!") == 2);
}

TEST_CASE("trim strips surrounding whitespace only", "[model]") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(trim(" \t\n").empty());
  CHECK(trim("x") == "x");
}

TEST_CASE("stage keys carry the probe index", "[model]") {
  CHECK(StageKind::justify().key() == "justify");
  CHECK(StageKind::uphold_internal().key() == "uphold_internal");
  CHECK(StageKind::sufficiency(2).key() == "uphold_suf:2");
  CHECK(StageKind::necessity(0).key() == "uphold_nec:0");
  CHECK_FALSE(StageKind::justify().is_uphold());
  CHECK(StageKind::uphold_external().is_uphold());
}

TEST_CASE("enum names round-trip", "[model]") {
  for (auto s : {Stance::Toxic, Stance::MaybeToxic, Stance::NonToxic, Stance::Unresolved}) {
    CHECK(stance_from_string(to_string(s)) == s);
  }
  for (auto k : {DecisionKind::Sufficient, DecisionKind::Insufficient, DecisionKind::Doubtful,
                 DecisionKind::Nonsensical, DecisionKind::Refusal}) {
    CHECK(decision_kind_from_string(to_string(k)) == k);
  }
  for (auto a : {Absence::NoNewReasons, Absence::Refusal, Absence::SingleReason, Absence::StanceMismatch,
                 Absence::NoJustifyReasons, Absence::Nonsensical, Absence::StageError}) {
    CHECK(absence_from_string(to_string(a)) == a);
  }
  for (auto t : {StageType::Justify, StageType::UpholdInternal, StageType::UpholdExternal,
                 StageType::UpholdSufficiency, StageType::UpholdNecessity}) {
    CHECK(stage_type_from_string(to_string(t)) == t);
  }
  CHECK_FALSE(stance_from_string("loud").has_value());
  CHECK(std::string(to_string(ErrorKind::MissingLogprobs)) == "MissingLogprobs");
}

TEST_CASE("token offsets end with the text length", "[model]") {
  const auto t = testing::make_trace("The text is toxic.");
  const auto off = t.token_offsets();
  REQUIRE(off.size() == t.tokens.size() + 1);
  CHECK(off.front() == 0);
  CHECK(off.back() == t.full_text.size());
}

TEST_CASE("trace consistency", "[model]") {
  auto t = testing::make_trace("a b c");
  CHECK(trace_is_consistent(t));
  t.tokens[1].logprob = 0.5;
  CHECK_FALSE(trace_is_consistent(t));
  t = testing::make_trace("a b c");
  t.full_text = "a b d";
  CHECK_FALSE(trace_is_consistent(t));
  t = testing::make_trace("a b c");
  t.tokens[0].logprob = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(trace_is_consistent(t));
}

TEST_CASE("stage record validation flags bad spans", "[model]") {
  StageRecord r;
  r.sample_id = "s";
  r.trace = testing::make_trace("Toxic.\n1. Rude.");
  r.parsed.decision_span = {0, 6, 0, 1, true, false};
  r.parsed.reason_spans.push_back({10, 15, 2, 3, true, false});
  r.reason_confidences = {0.5};
  CHECK(validate_stage_record(r).empty());

  auto bad = r;
  bad.parsed.reason_spans[0].char_end = 99;
  CHECK_FALSE(validate_stage_record(bad).empty());

  bad = r;
  bad.reason_confidences = {0.5, 0.5};
  CHECK_FALSE(validate_stage_record(bad).empty());

  bad = r;
  bad.reason_confidences = {1.5};
  CHECK_FALSE(validate_stage_record(bad).empty());
}

TEST_CASE("metric value helpers", "[model]") {
  const auto v = MetricValue::of(0.25);
  CHECK(v.present());
  CHECK(*v.value == 0.25);
  const auto a = MetricValue::absent(Absence::Refusal);
  CHECK_FALSE(a.present());
  CHECK(a.absence == Absence::Refusal);
}
