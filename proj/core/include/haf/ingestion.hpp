#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "haf/model.hpp"

namespace haf {

/// Which columns of a dataset hold what. Exactly one of `label_column` and
/// `prob_column` must be set.
struct SchemaMap {
  std::string text_column = "text";
  std::string id_column;  // optional; row ordinal ids otherwise
  std::string label_column;
  std::string prob_column;
  std::string source;  // dataset name; defaults to the file stem

  void validate() const;
  static SchemaMap from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct LoadResult {
  std::vector<InputSample> samples;
  std::size_t malformed_rows = 0;
  std::vector<std::string> diagnostics;  // one line per skipped row
};

/// Loads JSONL (".jsonl"/".json") or CSV with a header row. Throws
/// MissingColumn when the text column (or the mapped label/probability
/// column) is absent; rows with bad values are skipped and counted.
LoadResult load_dataset(const std::filesystem::path& path, const SchemaMap& schema);

/// RFC 4180 records: comma separated, '"' quoting with "" escapes, quoted
/// fields may span lines. CRLF and LF are both accepted.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

struct SamplingPolicy {
  std::size_t min_chars = 64;
  std::size_t max_chars = 1024;
  double mild_low = 0.5;   // closed band
  double mild_high = 0.6;
  double high_low = 0.75;  // open below
  double high_high = 1.0;  // closed above
  std::size_t sample_size = 1024;
  std::uint64_t rng_seed = 0;

  void validate() const;
  static SamplingPolicy from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct SampleResult {
  std::vector<InputSample> samples;
  std::size_t input = 0;
  std::size_t too_short = 0;
  std::size_t too_long = 0;
  std::size_t outside_bands = 0;
  std::size_t not_toxic = 0;
  std::size_t unlabeled = 0;
  std::size_t eligible = 0;
  std::size_t mild = 0;  // realized band mix of the drawn samples
  std::size_t high = 0;
};

/// Length filter on unicode scalar counts, then the probability bands or the
/// toxic label, then a seeded uniform draw without replacement. Output order
/// is draw order.
SampleResult filter_and_sample(const std::vector<InputSample>& samples, const SamplingPolicy& policy);

/// Uniform integer in [0, bound) by rejection, independent of the standard
/// library's distribution implementations.
std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t bound);

}  // namespace haf
