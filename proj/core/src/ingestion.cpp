#include "haf/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

void SchemaMap::validate() const {
  if (text_column.empty()) throw Error(ErrorKind::ConfigError, "schema: text_column is required");
  if (label_column.empty() == prob_column.empty()) {
    throw Error(ErrorKind::ConfigError, "schema: set exactly one of label_column and prob_column");
  }
}

SchemaMap SchemaMap::from_json(const json& doc) {
  SchemaMap s;
  try {
    s.text_column = doc.value("text_column", s.text_column);
    s.id_column = doc.value("id_column", s.id_column);
    s.label_column = doc.value("label_column", s.label_column);
    s.prob_column = doc.value("prob_column", s.prob_column);
    s.source = doc.value("source", s.source);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

json SchemaMap::to_json() const {
  return {{"text_column", text_column}, {"id_column", id_column}, {"label_column", label_column},
          {"prob_column", prob_column}, {"source", source}};
}

namespace {

struct RowError {
  std::string what;
};

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  // from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

double prob_value(const json& v) {
  std::optional<double> p;
  if (v.is_number()) p = v.get<double>();
  else if (v.is_string()) p = parse_double(v.get<std::string>());
  if (!p) throw RowError{"probability is not a number"};
  if (!std::isfinite(*p) || *p < 0.0 || *p > 1.0) throw RowError{"probability outside [0,1]"};
  return *p;
}

ToxicityLabel label_value(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? ToxicityLabel::Toxic : ToxicityLabel::NonToxic;
  if (v.is_number()) {
    const double d = v.get<double>();
    if (d == 1.0) return ToxicityLabel::Toxic;
    if (d == 0.0) return ToxicityLabel::NonToxic;
    throw RowError{"numeric label must be 0 or 1"};
  }
  if (v.is_string()) {
    std::string s(trim(v.get<std::string>()));
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "toxic" || s == "1" || s == "true" || s == "yes") return ToxicityLabel::Toxic;
    if (s == "non-toxic" || s == "non_toxic" || s == "nontoxic" || s == "0" || s == "false" || s == "no") {
      return ToxicityLabel::NonToxic;
    }
  }
  throw RowError{"unrecognised label"};
}

std::string id_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw RowError{"id must be a string or integer"};
}

std::string ordinal_id(const std::string& source, std::size_t row) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", row);
  return source + "-" + buf;
}

class Loader {
 public:
  Loader(const SchemaMap& schema, std::string source) : schema_(schema), source_(std::move(source)) {}

  /// `row` is the 1-based data row; `where` is used for diagnostics.
  void add(const json& obj, std::size_t row, const std::string& where) {
    auto require = [&](const std::string& column) -> const json& {
      if (!obj.contains(column)) throw Error(ErrorKind::MissingColumn, where + ": no column '" + column + "'");
      return obj.at(column);
    };
    const json& text = require(schema_.text_column);
    const json& target = require(schema_.label_column.empty() ? schema_.prob_column : schema_.label_column);
    try {
      InputSample s;
      if (!text.is_string()) throw RowError{"text is not a string"};
      s.text = text.get<std::string>();
      if (trim(s.text).empty()) throw RowError{"text is empty"};
      if (schema_.label_column.empty()) s.toxicity_prob = prob_value(target);
      else s.toxicity_label = label_value(target);
      s.id = schema_.id_column.empty() ? ordinal_id(source_, row) : id_value(require(schema_.id_column));
      if (!ids_.insert(s.id).second) throw RowError{"duplicate id '" + s.id + "'"};
      s.source = source_;
      result_.samples.push_back(std::move(s));
    } catch (const RowError& e) {
      skip(where, e.what);
    }
  }

  void skip(const std::string& where, const std::string& why) {
    ++result_.malformed_rows;
    result_.diagnostics.push_back(where + ": " + why);
  }

  LoadResult take() { return std::move(result_); }

 private:
  const SchemaMap& schema_;
  std::string source_;
  std::set<std::string> ids_;
  LoadResult result_;
};

bool has_extension(const std::filesystem::path& p, std::initializer_list<const char*> exts) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false, field_started = false, any = false;
  char c;
  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(fields));
    fields.clear();
    any = false;
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started) {
          in_quotes = true;
          field_started = any = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        any = true;
        break;
      case '\r':
        if (in.peek() == '\n') break;
        [[fallthrough]];
      case '\n':
        if (any || field_started) end_record();
        break;
      default:
        field.push_back(c);
        field_started = any = true;
    }
  }
  if (in_quotes) throw Error(ErrorKind::MalformedRow, "unterminated quoted field at end of file");
  if (any || field_started) end_record();
  return records;
}

LoadResult load_dataset(const std::filesystem::path& path, const SchemaMap& schema) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
  const std::string source = schema.source.empty() ? path.stem().string() : schema.source;
  Loader loader(schema, source);

  if (has_extension(path, {".csv"})) {
    const auto records = read_csv(in);
    if (records.empty()) return loader.take();
    const auto& header = records.front();
    for (const auto& col : {schema.text_column, schema.label_column.empty() ? schema.prob_column : schema.label_column}) {
      if (std::find(header.begin(), header.end(), col) == header.end()) {
        throw Error(ErrorKind::MissingColumn, path.string() + ": header has no column '" + col + "'");
      }
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
      const std::string where = path.filename().string() + " record " + std::to_string(r);
      if (records[r].size() != header.size()) {
        loader.skip(where, "expected " + std::to_string(header.size()) + " fields, got " +
                               std::to_string(records[r].size()));
        continue;
      }
      json obj = json::object();
      for (std::size_t c = 0; c < header.size(); ++c) obj[header[c]] = records[r][c];
      loader.add(obj, r, where);
    }
    return loader.take();
  }

  std::string line;
  std::size_t line_no = 0, row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception&) {
      loader.skip(where, "not valid JSON");
      continue;
    }
    if (!obj.is_object()) {
      loader.skip(where, "not a JSON object");
      continue;
    }
    loader.add(obj, row, where);
  }
  return loader.take();
}

void SamplingPolicy::validate() const {
  if (min_chars >= max_chars) throw Error(ErrorKind::ConfigError, "sampling: min_chars must be below max_chars");
  for (double b : {mild_low, mild_high, high_low, high_high}) {
    if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorKind::ConfigError, "sampling: band limits must lie in [0,1]");
  }
  if (mild_low > mild_high || high_low >= high_high) {
    throw Error(ErrorKind::ConfigError, "sampling: band limits out of order");
  }
}

SamplingPolicy SamplingPolicy::from_json(const json& doc) {
  SamplingPolicy p;
  try {
    p.min_chars = doc.value("min_chars", p.min_chars);
    p.max_chars = doc.value("max_chars", p.max_chars);
    if (doc.contains("mild_band")) {
      const auto band = doc.at("mild_band").get<std::vector<double>>();
      if (band.size() != 2) throw Error(ErrorKind::ConfigError, "sampling: mild_band needs two values");
      p.mild_low = band[0];
      p.mild_high = band[1];
    }
    if (doc.contains("high_band")) {
      const auto band = doc.at("high_band").get<std::vector<double>>();
      if (band.size() != 2) throw Error(ErrorKind::ConfigError, "sampling: high_band needs two values");
      p.high_low = band[0];
      p.high_high = band[1];
    }
    p.sample_size = doc.value("sample_size", p.sample_size);
    p.rng_seed = doc.value("seed", p.rng_seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("sampling: ") + e.what());
  }
  p.validate();
  return p;
}

json SamplingPolicy::to_json() const {
  return {{"min_chars", min_chars},
          {"max_chars", max_chars},
          {"mild_band", {mild_low, mild_high}},
          {"high_band", {high_low, high_high}},
          {"sample_size", sample_size},
          {"seed", rng_seed}};
}

std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorKind::InvalidInput, "bounded_uniform: bound must be positive");
  // Reject the low 2^64 mod bound words so every residue is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

SampleResult filter_and_sample(const std::vector<InputSample>& samples, const SamplingPolicy& policy) {
  policy.validate();
  SampleResult out;
  out.input = samples.size();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto len = utf8_length(s.text);
    if (len < policy.min_chars) {
      ++out.too_short;
      continue;
    }
    if (len > policy.max_chars) {
      ++out.too_long;
      continue;
    }
    if (s.toxicity_prob) {
      const double p = *s.toxicity_prob;
      const bool mild = p >= policy.mild_low && p <= policy.mild_high;
      const bool high = p > policy.high_low && p <= policy.high_high;
      if (!mild && !high) {
        ++out.outside_bands;
        continue;
      }
    } else if (s.toxicity_label) {
      if (*s.toxicity_label != ToxicityLabel::Toxic) {
        ++out.not_toxic;
        continue;
      }
    } else {
      ++out.unlabeled;
      continue;
    }
    eligible.push_back(i);
  }
  out.eligible = eligible.size();

  std::mt19937_64 rng(policy.rng_seed);
  const std::size_t take = std::min(policy.sample_size, eligible.size());
  for (std::size_t k = 0; k < take; ++k) {
    const auto j = k + static_cast<std::size_t>(bounded_uniform(rng, eligible.size() - k));
    std::swap(eligible[k], eligible[j]);
    const auto& s = samples[eligible[k]];
    if (s.toxicity_prob) {
      if (*s.toxicity_prob <= policy.mild_high) ++out.mild;
      else ++out.high;
    }
    out.samples.push_back(s);
  }
  return out;
}

}  // namespace haf
