#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "haf/model.hpp"

namespace haf {

nlohmann::json to_json(const InputSample& s);
nlohmann::json to_json(const GenerationTrace& t);
nlohmann::json to_json(const TextSpan& s);
nlohmann::json to_json(const ParsedExplanation& p);
nlohmann::json to_json(const StageRecord& r);
nlohmann::json to_json(const MetricValue& v);
nlohmann::json to_json(const MetricRecord& m);

/// Inverse conversions. Throw CorruptRecord on a missing or mistyped field.
InputSample input_sample_from_json(const nlohmann::json& doc);
GenerationTrace trace_from_json(const nlohmann::json& doc);
StageRecord stage_record_from_json(const nlohmann::json& doc);
MetricRecord metric_record_from_json(const nlohmann::json& doc);

/// One compact JSON document per line, keys sorted.
std::string to_jsonl_line(const nlohmann::json& doc);

/// Parsed lines of a JSONL file; blank lines are skipped. Throws
/// CorruptRecord naming the file and 1-based line number. A missing file
/// yields an empty list. With `drop_torn_tail`, an unparseable final line
/// lacking its newline (an interrupted append) is ignored.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path, bool drop_torn_tail = false);

}  // namespace haf
