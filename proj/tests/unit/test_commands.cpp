#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "haf/commands.hpp"
#include "haf/config.hpp"
#include "haf/error.hpp"
#include "haf/records.hpp"
#include "support/helpers.hpp"

using namespace haf;
using nlohmann::json;

namespace {

struct Streams {
  std::ostringstream out, err;
};

}  // namespace

TEST_CASE("config resolves paths and environment", "[commands]") {
  testing::TempDir dir;
  ::setenv("HAF_TEST_MODEL", "env-model", 1);
  testing::spit(dir / "c.json", json{{"backend", {{"type", "scripted"}, {"script", "s.json"}, {"model", "${HAF_TEST_MODEL}"}}},
                                     {"similarity", {{"type", "lexical"}}},
                                     {"schema", {{"prob_column", "p"}}}}
                                    .dump());
  const auto c = Config::load(dir / "c.json");
  CHECK(c.backend.model == "env-model");
  CHECK(std::filesystem::path(c.backend.script) == dir / "s.json");
  CHECK(c.concurrency == 8);

  ::unsetenv("HAF_TEST_UNSET");
  testing::spit(dir / "d.json", json{{"backend", {{"type", "http"}, {"base_url", "${HAF_TEST_UNSET}"}}}}.dump());
  try {
    Config::load(dir / "d.json");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
  CHECK(interpolate_env("a${HAF_TEST_MODEL}b") == "aenv-modelb");
}

TEST_CASE("mock run, rescore, report and compare", "[commands]") {
  testing::TempDir dir;
  const auto config = Config::load(testing::fixture("mock/config.json"));
  const auto run = dir / "run";
  Streams s;
  REQUIRE(cmd_run(config, testing::fixture("mock/dataset.jsonl"), run, s.out, s.err) == kExitOk);
  CHECK(s.out.str().find("7/7 samples scored") != std::string::npos);
  const auto golden = testing::slurp(testing::fixture("mock/golden_summary.csv"));
  CHECK(testing::slurp(run / "summary.csv") == golden);

  // A second run resumes everything and changes nothing.
  const auto before = testing::slurp(run / "metrics.jsonl");
  Streams again;
  REQUIRE(cmd_run(config, testing::fixture("mock/dataset.jsonl"), run, again.out, again.err) == kExitOk);
  CHECK(again.out.str().find("(7 resumed)") != std::string::npos);
  CHECK(again.out.str().find(" 0 generations") != std::string::npos);
  CHECK(testing::slurp(run / "metrics.jsonl") == before);

  Streams sc;
  REQUIRE(cmd_score(run, std::nullopt, sc.out, sc.err) == kExitOk);
  CHECK(testing::slurp(run / "metrics.jsonl") == before);

  testing::spit(dir / "w.json", R"({"w_c_justify": 0.5})");
  REQUIRE(cmd_score(run, dir / "w.json", sc.out, sc.err) == kExitOk);
  CHECK(testing::slurp(run / "metrics.jsonl") != before);

  Streams rep;
  std::filesystem::remove(run / "summary.md");
  REQUIRE(cmd_report(run, "md", rep.out, rep.err) == kExitOk);
  CHECK(std::filesystem::exists(run / "summary.md"));
  CHECK(cmd_report(run, "xml", rep.out, rep.err) == kExitFatal);
  CHECK(rep.err.str().find("unknown report format") != std::string::npos);

  Streams cmp;
  REQUIRE(cmd_compare_sim(config, run, cmp.out, cmp.err) == kExitOk);
  const auto doc = json::parse(testing::slurp(run / "similarity_comparison.json"));
  CHECK(doc["sets"].size() == 2);
  for (const auto& set : doc["sets"]) {
    CHECK(set["mean_abs_difference"].get<double>() >= 0.0);
    CHECK(set["mean_abs_difference"].get<double>() <= 1.0);
  }
}

TEST_CASE("command error exits", "[commands]") {
  testing::TempDir dir;
  Streams s;
  CHECK(cmd_score(dir / "nothing", std::nullopt, s.out, s.err) == kExitFatal);
  CHECK(cmd_report(dir / "nothing", "csv", s.out, s.err) == kExitFatal);
  CHECK(s.err.str().find("haf score") != std::string::npos);

  auto config = Config::load(testing::fixture("mock/config.json"));
  config.compare_a.reset();
  CHECK(cmd_compare_sim(config, dir.path(), s.out, s.err) == kExitFatal);

  CHECK(cmd_run(config, dir / "missing.jsonl", dir / "run", s.out, s.err) == kExitFatal);

  testing::spit(dir / "w.json", R"({"w_c_justify": 2.0})");
  const auto run = dir / "run2";
  REQUIRE(cmd_run(config, testing::fixture("mock/dataset.jsonl"), run, s.out, s.err) == kExitOk);
  CHECK(cmd_score(run, dir / "w.json", s.out, s.err) == kExitFatal);
}

TEST_CASE("rescoring never reaches the provider", "[commands]") {
  testing::TempDir dir;
  const auto config = Config::load(testing::fixture("mock/config.json"));
  const auto run = dir / "run";
  Streams s;
  REQUIRE(cmd_run(config, testing::fixture("mock/dataset.jsonl"), run, s.out, s.err) == kExitOk);
  testing::spit(run / "similarity_cache.jsonl", "");
  CHECK(cmd_score(run, std::nullopt, s.out, s.err) == kExitFatal);
  CHECK(s.err.str().find("cache") != std::string::npos);
}
