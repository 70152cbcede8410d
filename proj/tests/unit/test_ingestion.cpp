#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "haf/error.hpp"
#include "haf/ingestion.hpp"
#include "support/helpers.hpp"

using namespace haf;
using nlohmann::json;

namespace {

SchemaMap prob_schema() {
  SchemaMap s;
  s.id_column = "id";
  s.prob_column = "toxicity";
  return s;
}

}  // namespace

TEST_CASE("csv reader handles quoting", "[ingestion]") {
  std::istringstream in("a,b\r\n\"x, y\",\"he said \"\"hi\"\"\"\n\"multi\nline\",2\n");
  const auto rows = read_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "x, y");
  CHECK(rows[1][1] == "he said \"hi\"");
  CHECK(rows[2][0] == "multi\nline");
  std::istringstream bad("a\n\"open");
  CHECK_THROWS_AS(read_csv(bad), Error);
}

TEST_CASE("fixture dataset loads with malformed rows counted", "[ingestion]") {
  const auto expected = json::parse(testing::slurp(testing::fixture("ingestion/expected.json")));
  const auto loaded = load_dataset(testing::fixture("ingestion/dataset.csv"), prob_schema());
  CHECK(loaded.samples.size() == 48);
  CHECK(loaded.malformed_rows == expected["malformed"].get<std::size_t>());
  CHECK(loaded.diagnostics.size() == 2);
  CHECK(loaded.samples.front().source == "dataset");
}

TEST_CASE("filter keeps exactly the banded rows", "[ingestion]") {
  const auto expected = json::parse(testing::slurp(testing::fixture("ingestion/expected.json")));
  const auto loaded = load_dataset(testing::fixture("ingestion/dataset.csv"), prob_schema());
  SamplingPolicy p;
  p.sample_size = 1000;
  p.rng_seed = 1;
  const auto all = filter_and_sample(loaded.samples, p);
  std::set<std::string> got;
  for (const auto& s : all.samples) got.insert(s.id);
  const auto want_list = expected["survivors"].get<std::vector<std::string>>();
  const std::set<std::string> want(want_list.begin(), want_list.end());
  CHECK(got == want);
  CHECK(all.eligible == want.size());
  CHECK(all.mild + all.high == all.samples.size());
  CHECK(all.too_short + all.too_long + all.outside_bands + all.eligible == loaded.samples.size());
}

TEST_CASE("seeded draw order matches the reference generator", "[ingestion]") {
  const auto expected = json::parse(testing::slurp(testing::fixture("ingestion/expected.json")));
  const auto loaded = load_dataset(testing::fixture("ingestion/dataset.csv"), prob_schema());
  SamplingPolicy p;
  p.rng_seed = expected["seed"].get<std::uint64_t>();
  p.sample_size = expected["sample_size"].get<std::size_t>();
  const auto a = filter_and_sample(loaded.samples, p);
  const auto b = filter_and_sample(loaded.samples, p);
  std::vector<std::string> ids_a, ids_b;
  for (const auto& s : a.samples) ids_a.push_back(s.id);
  for (const auto& s : b.samples) ids_b.push_back(s.id);
  CHECK(ids_a == ids_b);
  CHECK(ids_a == expected["draw_order"].get<std::vector<std::string>>());

  p.rng_seed += 1;
  std::vector<std::string> ids_c;
  for (const auto& s : filter_and_sample(loaded.samples, p).samples) ids_c.push_back(s.id);
  CHECK(ids_c != ids_a);
}

TEST_CASE("labeled datasets keep toxic rows", "[ingestion]") {
  testing::TempDir dir;
  const std::string long_text(80, 'a');
  std::string body;
  body += json{{"text", long_text}, {"label", "toxic"}}.dump() + "\n";
  body += json{{"text", long_text}, {"label", 0}}.dump() + "\n";
  body += json{{"text", long_text}, {"label", true}}.dump() + "\n";
  body += json{{"text", long_text}, {"label", "perhaps"}}.dump() + "\n";
  body += "not json\n\n";
  testing::spit(dir / "set.jsonl", body);
  SchemaMap s;
  s.label_column = "label";
  s.source = "lab";
  const auto loaded = load_dataset(dir / "set.jsonl", s);
  CHECK(loaded.samples.size() == 3);
  CHECK(loaded.malformed_rows == 2);
  CHECK(loaded.samples[0].id == "lab-000001");
  const auto drawn = filter_and_sample(loaded.samples, SamplingPolicy{});
  CHECK(drawn.samples.size() == 2);
  CHECK(drawn.not_toxic == 1);
}

TEST_CASE("missing columns and bad schemas", "[ingestion]") {
  testing::TempDir dir;
  testing::spit(dir / "x.csv", "body,toxicity\nhello,0.5\n");
  SchemaMap s = prob_schema();
  s.id_column.clear();
  try {
    load_dataset(dir / "x.csv", s);
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingColumn);
  }
  SchemaMap both;
  both.label_column = "l";
  both.prob_column = "p";
  CHECK_THROWS_AS(both.validate(), Error);
  SchemaMap neither;
  CHECK_THROWS_AS(neither.validate(), Error);
}

TEST_CASE("duplicate ids are malformed", "[ingestion]") {
  testing::TempDir dir;
  testing::spit(dir / "d.csv", "id,text,toxicity\na,hello,0.5\na,again,0.5\n");
  const auto loaded = load_dataset(dir / "d.csv", prob_schema());
  CHECK(loaded.samples.size() == 1);
  CHECK(loaded.malformed_rows == 1);
}

TEST_CASE("sampling policy json and validation", "[ingestion]") {
  SamplingPolicy p;
  p.rng_seed = 9;
  const auto again = SamplingPolicy::from_json(p.to_json());
  CHECK(again.rng_seed == 9);
  CHECK(again.mild_low == 0.5);
  CHECK(again.high_low == 0.75);
  CHECK_THROWS_AS(SamplingPolicy::from_json(json{{"min_chars", 10}, {"max_chars", 5}}), Error);
  CHECK_THROWS_AS(SamplingPolicy::from_json(json{{"mild_band", {0.7, 0.6}}}), Error);
}

TEST_CASE("bounded uniform stays in range and covers it", "[ingestion]") {
  std::mt19937_64 rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = bounded_uniform(rng, 7);
    REQUIRE(v < 7);
    ++hits[v];
  }
  for (int h : hits) CHECK(h > 800);
  CHECK_THROWS_AS(bounded_uniform(rng, 0), Error);
}
