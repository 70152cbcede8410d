#include "haf/records.hpp"

#include <fstream>
#include <sstream>

#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

namespace {

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorKind::CorruptRecord, what); }

template <class T>
T get(const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    corrupt(std::string("missing or mistyped field '") + key + "'");
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional_number(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return get<double>(doc, key);
}

TextSpan span_from_json(const json& doc) {
  TextSpan s;
  const auto chars = get<std::vector<std::size_t>>(doc, "chars");
  if (chars.size() != 2) corrupt("span 'chars' must have two entries");
  s.char_start = chars[0];
  s.char_end = chars[1];
  if (doc.contains("tokens")) {
    const auto tokens = get<std::vector<std::size_t>>(doc, "tokens");
    if (tokens.size() != 2) corrupt("span 'tokens' must have two entries");
    s.token_start = tokens[0];
    s.token_end = tokens[1];
    s.aligned = true;
  }
  s.widened = doc.value("widened", false);
  return s;
}

std::vector<TextSpan> spans_from_json(const json& doc, const char* key) {
  std::vector<TextSpan> out;
  if (!doc.contains(key)) corrupt(std::string("missing field '") + key + "'");
  for (const auto& s : doc.at(key)) out.push_back(span_from_json(s));
  return out;
}

ParsedExplanation parsed_from_json(const json& doc) {
  ParsedExplanation p;
  p.decision_span = span_from_json(doc.at("decision_span"));
  p.decision_sentences = spans_from_json(doc, "decision_sentences");
  p.reason_spans = spans_from_json(doc, "reason_spans");
  auto stance = stance_from_string(get<std::string>(doc, "stance"));
  if (!stance) corrupt("unknown stance");
  p.stance = *stance;
  if (doc.contains("decision_kind") && !doc.at("decision_kind").is_null()) {
    auto kind = decision_kind_from_string(get<std::string>(doc, "decision_kind"));
    if (!kind) corrupt("unknown decision kind");
    p.decision_kind = *kind;
  }
  p.refusal_candidate = doc.value("refusal_candidate", false);
  p.source_fingerprint = get<std::string>(doc, "source_fingerprint");
  return p;
}

MetricValue metric_value_from_json(const json& doc) {
  if (doc.contains("value")) return MetricValue::of(get<double>(doc, "value"));
  auto a = absence_from_string(get<std::string>(doc, "absent"));
  if (!a) corrupt("unknown absence reason");
  return MetricValue::absent(*a);
}

DecisionKind kind_field(const json& doc) {
  auto k = decision_kind_from_string(get<std::string>(doc, "decision"));
  if (!k) corrupt("unknown decision kind");
  return *k;
}

json skipped_to_json(const std::vector<SkippedProbe>& list) {
  json out = json::array();
  for (const auto& s : list) out.push_back({{"index", s.index}, {"reason", std::string(to_string(s.reason))}});
  return out;
}

std::vector<SkippedProbe> skipped_from_json(const json& doc, const char* key) {
  std::vector<SkippedProbe> out;
  if (!doc.contains(key)) return out;
  for (const auto& s : doc.at(key)) {
    auto a = absence_from_string(get<std::string>(s, "reason"));
    if (!a) corrupt("unknown absence reason");
    out.push_back({get<std::size_t>(s, "index"), *a});
  }
  return out;
}

json decision_or_null(const std::optional<DecisionKind>& k) {
  return k ? json(std::string(to_string(*k))) : json(nullptr);
}

std::optional<DecisionKind> read_decision(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  auto k = decision_kind_from_string(get<std::string>(doc, key));
  if (!k) corrupt("unknown decision kind");
  return k;
}

}  // namespace

json to_json(const InputSample& s) {
  json doc{{"id", s.id}, {"text", s.text}, {"source", s.source}};
  doc["label"] = s.toxicity_label ? json(std::string(to_string(*s.toxicity_label))) : json(nullptr);
  doc["prob"] = optional_number(s.toxicity_prob);
  return doc;
}

InputSample input_sample_from_json(const json& doc) {
  InputSample s;
  s.id = get<std::string>(doc, "id");
  s.text = get<std::string>(doc, "text");
  s.source = doc.value("source", std::string());
  if (doc.contains("label") && !doc.at("label").is_null()) {
    auto l = toxicity_label_from_string(get<std::string>(doc, "label"));
    if (!l) corrupt("unknown toxicity label");
    s.toxicity_label = *l;
  }
  s.toxicity_prob = read_optional_number(doc, "prob");
  return s;
}

json to_json(const GenerationTrace& t) {
  json tokens = json::array();
  for (const auto& tok : t.tokens) {
    json entry = json::array({tok.text, tok.logprob});
    if (tok.special) entry.push_back(true);
    tokens.push_back(std::move(entry));
  }
  return {{"tokens", std::move(tokens)}, {"full_text", t.full_text}, {"prompt_fingerprint", t.prompt_fingerprint}};
}

GenerationTrace trace_from_json(const json& doc) {
  GenerationTrace t;
  t.full_text = get<std::string>(doc, "full_text");
  t.prompt_fingerprint = doc.value("prompt_fingerprint", std::string());
  if (!doc.contains("tokens") || !doc.at("tokens").is_array()) corrupt("missing field 'tokens'");
  for (const auto& e : doc.at("tokens")) {
    if (!e.is_array() || e.size() < 2 || !e[0].is_string() || !e[1].is_number()) corrupt("malformed token entry");
    TokenRecord tok{e[0].get<std::string>(), e[1].get<double>(), e.size() > 2 && e[2].is_boolean() && e[2].get<bool>()};
    t.tokens.push_back(std::move(tok));
  }
  return t;
}

json to_json(const TextSpan& s) {
  json doc{{"chars", {s.char_start, s.char_end}}};
  if (s.aligned) doc["tokens"] = {s.token_start, s.token_end};
  if (s.widened) doc["widened"] = true;
  return doc;
}

json to_json(const ParsedExplanation& p) {
  json doc;
  doc["decision_span"] = to_json(p.decision_span);
  doc["decision_sentences"] = json::array();
  for (const auto& s : p.decision_sentences) doc["decision_sentences"].push_back(to_json(s));
  doc["reason_spans"] = json::array();
  for (const auto& s : p.reason_spans) doc["reason_spans"].push_back(to_json(s));
  doc["stance"] = std::string(to_string(p.stance));
  doc["decision_kind"] = decision_or_null(p.decision_kind);
  doc["refusal_candidate"] = p.refusal_candidate;
  doc["source_fingerprint"] = p.source_fingerprint;
  return doc;
}

json to_json(const StageRecord& r) {
  json doc;
  doc["sample_id"] = r.sample_id;
  doc["stage"] = std::string(to_string(r.stage.type));
  if (r.stage.has_index()) doc["index"] = r.stage.index;
  doc["prompt"] = r.prompt_text;
  doc["trace"] = to_json(r.trace);
  doc["parsed"] = to_json(r.parsed);
  doc["reason_confidences"] = r.reason_confidences;
  doc["decision_confidence"] = optional_number(r.decision_confidence);
  doc["started_at_ms"] = r.started_at_ms;
  doc["finished_at_ms"] = r.finished_at_ms;
  doc["model_id"] = r.model_id;
  doc["decision_text"] = r.decision_text();
  json reasons = json::array();
  for (std::size_t i = 0; i < r.parsed.reason_spans.size(); ++i) reasons.push_back(r.reason_text(i));
  doc["reason_texts"] = std::move(reasons);
  return doc;
}

StageRecord stage_record_from_json(const json& doc) {
  StageRecord r;
  r.sample_id = get<std::string>(doc, "sample_id");
  auto type = stage_type_from_string(get<std::string>(doc, "stage"));
  if (!type) corrupt("unknown stage");
  r.stage.type = *type;
  if (r.stage.has_index()) r.stage.index = get<std::size_t>(doc, "index");
  r.prompt_text = get<std::string>(doc, "prompt");
  if (!doc.contains("trace")) corrupt("missing field 'trace'");
  r.trace = trace_from_json(doc.at("trace"));
  if (!doc.contains("parsed")) corrupt("missing field 'parsed'");
  r.parsed = parsed_from_json(doc.at("parsed"));
  r.reason_confidences = get<std::vector<double>>(doc, "reason_confidences");
  r.decision_confidence = read_optional_number(doc, "decision_confidence");
  r.started_at_ms = doc.value("started_at_ms", std::int64_t{0});
  r.finished_at_ms = doc.value("finished_at_ms", std::int64_t{0});
  r.model_id = doc.value("model_id", std::string());
  if (auto problems = validate_stage_record(r); !problems.empty()) corrupt(problems.front());
  return r;
}

json to_json(const MetricValue& v) {
  if (v.value) return {{"value", *v.value}};
  return {{"absent", std::string(to_string(v.absence.value_or(Absence::StageError)))}};
}

json to_json(const MetricRecord& m) {
  json doc;
  doc["sample_id"] = m.sample_id;
  doc["source"] = m.source;
  doc["model_id"] = m.model_id;
  doc["stance"] = std::string(to_string(m.stance));
  doc["stance_confidence"] = optional_number(m.stance_confidence);
  doc["refusal"] = m.refusal;
  doc["justify_reason_count"] = m.justify_reason_count;
  doc["sos"] = to_json(m.sos);
  doc["dis"] = to_json(m.dis);
  doc["uii"] = to_json(m.uii);
  doc["uei"] = to_json(m.uei);
  doc["rs"] = to_json(m.rs);
  doc["rn"] = to_json(m.rn);
  doc["rs_entries"] = json::array();
  for (const auto& e : m.rs_entries) {
    doc["rs_entries"].push_back({{"index", e.reason_index},
                                 {"decision", std::string(to_string(e.decision_kind))},
                                 {"weight", e.weight},
                                 {"decision_confidence", e.decision_confidence},
                                 {"informativeness", e.informativeness},
                                 {"new_reasons", e.new_reason_count},
                                 {"value", e.value}});
  }
  doc["rn_entries"] = json::array();
  for (const auto& e : m.rn_entries) {
    doc["rn_entries"].push_back({{"index", e.left_out_index},
                                 {"decision", std::string(to_string(e.decision_kind))},
                                 {"weight", e.weight},
                                 {"decision_confidence", e.decision_confidence},
                                 {"informativeness", e.informativeness},
                                 {"new_reasons", e.new_reason_count},
                                 {"value", e.value}});
  }
  doc["rs_skipped"] = skipped_to_json(m.rs_skipped);
  doc["rn_skipped"] = skipped_to_json(m.rn_skipped);
  doc["internal_decision"] = decision_or_null(m.internal_decision);
  doc["external_decision"] = decision_or_null(m.external_decision);
  doc["internal_new_reasons"] = m.internal_new_reasons;
  doc["external_new_reasons"] = m.external_new_reasons;
  return doc;
}

MetricRecord metric_record_from_json(const json& doc) {
  MetricRecord m;
  m.sample_id = get<std::string>(doc, "sample_id");
  m.source = doc.value("source", std::string());
  m.model_id = doc.value("model_id", std::string());
  auto stance = stance_from_string(get<std::string>(doc, "stance"));
  if (!stance) corrupt("unknown stance");
  m.stance = *stance;
  m.stance_confidence = read_optional_number(doc, "stance_confidence");
  m.refusal = doc.value("refusal", false);
  m.justify_reason_count = doc.value("justify_reason_count", std::size_t{0});
  for (auto [key, field] : {std::pair{"sos", &m.sos}, {"dis", &m.dis}, {"uii", &m.uii}, {"uei", &m.uei},
                            {"rs", &m.rs}, {"rn", &m.rn}}) {
    if (!doc.contains(key)) corrupt(std::string("missing metric '") + key + "'");
    *field = metric_value_from_json(doc.at(key));
  }
  if (doc.contains("rs_entries")) {
    for (const auto& e : doc.at("rs_entries")) {
      m.rs_entries.push_back({get<std::size_t>(e, "index"), kind_field(e), get<double>(e, "weight"),
                              get<double>(e, "decision_confidence"), get<double>(e, "informativeness"),
                              get<std::size_t>(e, "new_reasons"), get<double>(e, "value")});
    }
  }
  if (doc.contains("rn_entries")) {
    for (const auto& e : doc.at("rn_entries")) {
      m.rn_entries.push_back({get<std::size_t>(e, "index"), kind_field(e), get<double>(e, "weight"),
                              get<double>(e, "decision_confidence"), get<double>(e, "informativeness"),
                              get<std::size_t>(e, "new_reasons"), get<double>(e, "value")});
    }
  }
  m.rs_skipped = skipped_from_json(doc, "rs_skipped");
  m.rn_skipped = skipped_from_json(doc, "rn_skipped");
  m.internal_decision = read_decision(doc, "internal_decision");
  m.external_decision = read_decision(doc, "external_decision");
  m.internal_new_reasons = doc.value("internal_new_reasons", std::size_t{0});
  m.external_new_reasons = doc.value("external_new_reasons", std::size_t{0});
  return m;
}

std::string to_jsonl_line(const json& doc) { return doc.dump(-1, ' ', false, json::error_handler_t::strict) + "\n"; }

std::vector<json> read_jsonl(const std::filesystem::path& path, bool drop_torn_tail) {
  std::vector<json> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    ++line_no;
    auto nl = content.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    if (!terminated) nl = content.size();
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      if (drop_torn_tail && !terminated) break;
      corrupt(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace haf
