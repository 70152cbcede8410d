#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "haf/error.hpp"
#include "haf/metrics.hpp"
#include "oracle/oracle.hpp"
#include "support/helpers.hpp"

using namespace haf;
using Catch::Matchers::WithinAbs;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("weights defaults and validation", "[metrics]") {
  MetricWeights w;
  CHECK_NOTHROW(w.validate());
  CHECK(w.sufficiency_weight(DecisionKind::Sufficient) == 1.0);
  CHECK(w.sufficiency_weight(DecisionKind::Doubtful) == 0.5);
  CHECK(w.sufficiency_weight(DecisionKind::Insufficient) == 0.1);
  CHECK(w.necessity_weight(DecisionKind::Insufficient) == 1.0);
  CHECK(w.necessity_weight(DecisionKind::Sufficient) == 0.1);

  auto bad = w;
  bad.w_c_justify = 0.7;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidWeights);
  bad = w;
  bad.w_s.erase(DecisionKind::Doubtful);
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidWeights);
  bad = w;
  bad.w_n[DecisionKind::Nonsensical] = 0.2;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidWeights);
}

TEST_CASE("weights json", "[metrics]") {
  MetricWeights w;
  CHECK(MetricWeights::from_json(w.to_json()) == w);
  const auto half = MetricWeights::from_json(nlohmann::json{{"w_c_justify", 0.6}});
  CHECK_THAT(half.w_g_justify, WithinAbs(0.4, 1e-15));
  const auto raw = MetricWeights::from_json(nlohmann::json{{"rs_empty_set", "raw"}});
  CHECK(raw.rs_empty_set == RsEmptySetRule::RawConfidence);
  CHECK_THROWS_AS(MetricWeights::from_json(nlohmann::json{{"w_s", {{"loud", 1.0}}}}), Error);
  CHECK_THROWS_AS(MetricWeights::from_json(nlohmann::json{{"w_c_justify", 0.6}, {"w_g_justify", 0.6}}), Error);
  CHECK_THROWS_AS(MetricWeights::from_json(nlohmann::json::array()), Error);
}

TEST_CASE("strength of support", "[metrics]") {
  MetricWeights w;
  const std::vector<ReasonSupport> r{{0.5, 0.4}, {0.3, 0.6}};
  CHECK_THAT(sos(r, w), WithinAbs(0.42, 1e-12));
  CHECK(kind_of([&] { sos(std::span<const ReasonSupport>{}, w); }) == ErrorKind::EmptyReasonList);
  const std::vector<ReasonSupport> out{{1.2, 0.4}};
  CHECK(kind_of([&] { sos(out, w); }) == ErrorKind::InvalidInput);
}

TEST_CASE("diversity in support", "[metrics]") {
  const std::vector<double> c{0.4, 0.8};
  const std::vector<std::vector<double>> h{{0.0, 0.5}, {0.5, 0.0}};
  CHECK_THAT(dis(c, h), WithinAbs(0.3, 1e-12));
  CHECK(kind_of([&] { dis(std::vector<double>{0.5}, {{0.0}}); }) == ErrorKind::SingleReason);
  CHECK(kind_of([&] { dis(c, {{0.0, 0.5}}); }) == ErrorKind::LengthMismatch);
  CHECK(kind_of([&] { dis(c, {{0.0, 0.5}, {0.5}}); }) == ErrorKind::LengthMismatch);
  const std::vector<std::vector<double>> dup{{0.0, 0.0}, {0.0, 0.0}};
  CHECK(dis(c, dup) == 0.0);
}

TEST_CASE("confidence-weighted diversity", "[metrics]") {
  const std::vector<double> h{0.2, 0.8}, c{0.5, 1.0};
  CHECK_THAT(div(h, c), WithinAbs(0.6, 1e-12));
  const std::vector<double> one{0.2};
  CHECK(kind_of([&] { div(one, c); }) == ErrorKind::LengthMismatch);
  CHECK(kind_of([&] { div(std::span<const double>{}, std::span<const double>{}); }) == ErrorKind::EmptyReasonList);
  const std::vector<double> zeros{0.0, 0.0};
  CHECK(kind_of([&] { div(h, zeros); }) == ErrorKind::ZeroConfidenceMass);
}

TEST_CASE("post-hoc reason uncertainty", "[metrics]") {
  MetricWeights w;
  CHECK_THAT(uii_or_uei(std::vector<NewReason>{{0.4, 0.6}}, w), WithinAbs(0.5, 1e-12));
  CHECK_THAT(uii_or_uei(std::vector<NewReason>{{1.0, 1.0}, {0.0, 0.0}}, w), WithinAbs(0.5, 1e-12));
  CHECK(kind_of([&] { uii_or_uei(std::span<const NewReason>{}, w); }) == ErrorKind::NoNewReasons);
}

TEST_CASE("sufficiency factor", "[metrics]") {
  MetricWeights w;
  CHECK_THAT(informativeness_suf(std::vector<NewReason>{{0.5, 0.3}}), WithinAbs(0.4, 1e-12));
  CHECK(informativeness_suf(std::span<const NewReason>{}) == 0.0);

  const auto a = rs(DecisionKind::Sufficient, 0.8, std::vector<NewReason>{{0.5, 0.3}}, w);
  CHECK_THAT(a.value, WithinAbs(0.48, 1e-12));
  CHECK(a.weight == 1.0);
  CHECK(a.new_reasons == 1);
  const auto b = rs(DecisionKind::Insufficient, 0.9, {}, w);
  CHECK_THAT(b.value, WithinAbs(0.09, 1e-12));

  auto raw = w;
  raw.rs_empty_set = RsEmptySetRule::RawConfidence;
  CHECK_THAT(rs(DecisionKind::Insufficient, 0.9, {}, raw).value, WithinAbs(0.9, 1e-12));

  CHECK(kind_of([&] { rs(DecisionKind::Nonsensical, 0.9, {}, w); }) == ErrorKind::NonsensicalDecision);
  CHECK(kind_of([&] { rs(DecisionKind::Refusal, 0.9, {}, w); }) == ErrorKind::NonsensicalDecision);
}

TEST_CASE("necessity factor", "[metrics]") {
  MetricWeights w;
  const std::vector<NecessityEvidence> ev{{0.6, 0.9, 0.8}};
  CHECK_THAT(informativeness_nec(ev), WithinAbs(0.66, 1e-12));
  const auto a = rn(DecisionKind::Insufficient, 0.7, ev, w);
  CHECK_THAT(a.value, WithinAbs(0.462, 1e-12));
  const auto b = rn(DecisionKind::Sufficient, 1.0, std::vector<NecessityEvidence>{{1.0, 1.0, 1.0}}, w);
  CHECK_THAT(b.value, WithinAbs(0.1, 1e-12));
  CHECK(rn(DecisionKind::Insufficient, 0.7, {}, w).value == 0.0);
  CHECK(kind_of([&] { rn(DecisionKind::Nonsensical, 0.7, ev, w); }) == ErrorKind::NonsensicalDecision);
}

TEST_CASE("metrics agree with the reference formulas", "[metrics]") {
  std::mt19937_64 rng(7);
  MetricWeights w;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 5;
    const auto c = testing::uniform_vector(rng, n, 0.01, 1.0);
    const auto g = testing::uniform_vector(rng, n);
    std::vector<ReasonSupport> rsup;
    for (std::size_t i = 0; i < n; ++i) rsup.push_back({c[i], g[i]});
    CHECK_THAT(sos(rsup, w), WithinAbs(oracle::sos(c, g, 0.8, 0.2), 1e-12));

    std::vector<std::vector<double>> h(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) h[i][j] = h[j][i] = testing::uniform_vector(rng, 1)[0];
    CHECK_THAT(dis(c, h), WithinAbs(oracle::dis(c, h), 1e-12));
    CHECK_THAT(div(g, c), WithinAbs(oracle::div(g, c), 1e-12));
  }
}

TEST_CASE("sos and dis ignore reason order", "[metrics]") {
  std::mt19937_64 rng(11);
  MetricWeights w;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + trial % 4;
    auto c = testing::uniform_vector(rng, n);
    std::vector<ReasonSupport> r;
    for (double x : c) r.push_back({x, testing::uniform_vector(rng, 1)[0]});
    std::vector<std::vector<double>> h(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) h[i][j] = h[j][i] = testing::uniform_vector(rng, 1)[0];

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ReasonSupport> rp;
    std::vector<double> cp;
    std::vector<std::vector<double>> hp(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      rp.push_back(r[perm[i]]);
      cp.push_back(c[perm[i]]);
      for (std::size_t j = 0; j < n; ++j) hp[i][j] = h[perm[i]][perm[j]];
    }
    CHECK_THAT(sos(rp, w), WithinAbs(sos(r, w), 1e-12));
    CHECK_THAT(dis(cp, hp), WithinAbs(dis(c, h), 1e-12));
  }
}
