#include "haf/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

#include "haf/backend.hpp"
#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

extern const char* const kDefaultRulesJson;  // embedded from data/default_rules.json

namespace {

const std::regex& item_marker() {
  static const std::regex re(R"(^([ \t]*)(\*\*)?(\d{1,3})[.)](\*\*)?[ \t]+(?=\S))");
  return re;
}

const std::regex& header_line() {
  static const std::regex re(
      R"(^\s*(?:#+\s*)?(?:\*\*)?\s*(?:additional\s+|new\s+|further\s+)?reasons?(?:\s*\(s\))?\s*(?:\*\*)?\s*:?\s*(?:\*\*)?\s*:?\s*$)",
      std::regex::icase);
  return re;
}

const std::regex& labeled_reason() {
  static const std::regex re(
      R"(^\s*(?:[-*]\s+)?(?:\*\*)?\s*(?:additional\s+|new\s+|further\s+)?reasons?(?:\s*\(s\))?\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(?=\S))",
      std::regex::icase);
  return re;
}

const std::regex& decision_prefix() {
  static const std::regex re(
      R"(^\s*(?:#+\s*)?(?:\*\*)?\s*(?:final\s+)?(?:decision|answer|stance|verdict)\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*)",
      std::regex::icase);
  return re;
}

struct Line {
  std::size_t begin;
  std::size_t end;  // excludes the newline and a trailing '\r'
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto end = nl;
    if (end > pos && text[end - 1] == '\r') --end;
    lines.push_back({pos, end});
    if (nl == text.size()) break;
    pos = nl + 1;
  }
  return lines;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Shrinks [b, e) past surrounding whitespace.
void trim_range(std::string_view text, std::size_t& b, std::size_t& e) {
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
}

bool is_blank(std::string_view text, const Line& l) {
  auto b = l.begin, e = l.end;
  trim_range(text, b, e);
  return b == e;
}

bool is_indented(std::string_view text, const Line& l) {
  if (l.begin >= l.end) return false;
  if (text[l.begin] == '\t') return true;
  return l.end - l.begin >= 2 && text[l.begin] == ' ' && text[l.begin + 1] == ' ';
}

std::string_view line_view(std::string_view text, const Line& l) { return text.substr(l.begin, l.end - l.begin); }

bool matches(const std::regex& re, std::string_view s, std::cmatch* m = nullptr) {
  std::cmatch local;
  auto& mm = m ? *m : local;
  return std::regex_search(s.data(), s.data() + s.size(), mm, re, std::regex_constants::match_continuous);
}

/// Decision content of one line: header prefix and surrounding bold removed.
std::pair<std::size_t, std::size_t> decision_content(std::string_view text, const Line& l) {
  auto b = l.begin, e = l.end;
  std::cmatch m;
  if (matches(decision_prefix(), line_view(text, l), &m)) b += static_cast<std::size_t>(m.length(0));
  trim_range(text, b, e);
  if (e - b > 4 && text.substr(b, 2) == "**" && text.substr(e - 2, 2) == "**") {
    b += 2;
    e -= 2;
    trim_range(text, b, e);
  }
  // A prefix like "**Decision: Toxic**" leaves one unmatched marker behind.
  std::size_t markers = 0;
  for (auto p = text.substr(b, e - b).find("**"); p != std::string_view::npos;
       p = text.substr(b, e - b).find("**", p + 2)) {
    ++markers;
  }
  if (markers % 2 == 1 && e - b >= 2) {
    if (text.substr(e - 2, 2) == "**") {
      e -= 2;
    } else if (text.substr(b, 2) == "**") {
      b += 2;
    }
    trim_range(text, b, e);
  }
  return {b, e};
}

struct ItemCursor {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool open = false;
};

std::shared_ptr<const std::regex> compile_pattern(const std::string& pattern) {
  try {
    return std::make_shared<const std::regex>(pattern, std::regex::ECMAScript | std::regex::optimize);
  } catch (const std::regex_error& e) {
    throw Error(ErrorKind::ConfigError, "bad rule pattern '" + pattern + "': " + e.what());
  }
}

bool search(const std::regex& re, const std::string& s) { return std::regex_search(s, re); }

}  // namespace

// ---------------------------------------------------------------------------
// rules

std::string normalize_for_matching(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == '*') continue;
    if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(text[i + 2]) == 0x99 || static_cast<unsigned char>(text[i + 2]) == 0x98)) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

void ClassifierRules::compile() {
  for (auto& r : stance_rules) r.compiled = compile_pattern(r.pattern);
  for (auto& r : sufficiency_rules) r.compiled = compile_pattern(r.pattern);
  refusal_compiled_.clear();
  for (const auto& p : refusal_patterns) refusal_compiled_.push_back(compile_pattern(p));
}

void ClassifierRules::validate() const {
  if (stance_rules.empty()) throw Error(ErrorKind::ConfigError, "stance_rules is empty");
  if (sufficiency_rules.empty()) throw Error(ErrorKind::ConfigError, "sufficiency_rules is empty");
  if (!(similarity_floor >= 0.0 && similarity_floor <= 1.0)) {
    throw Error(ErrorKind::ConfigError, "similarity_floor must lie in [0,1]");
  }
  for (const auto& [kind, list] : anchors) {
    if (kind == DecisionKind::Nonsensical || kind == DecisionKind::Refusal) {
      throw Error(ErrorKind::ConfigError, "anchors are only defined for sufficient/insufficient/doubtful");
    }
    for (const auto& a : list) {
      if (trim(a).empty()) throw Error(ErrorKind::ConfigError, "empty anchor sentence");
    }
  }
}

ClassifierRules ClassifierRules::from_json(const json& doc) {
  ClassifierRules rules;
  try {
    rules.version = doc.value("version", std::string("custom"));
    rules.similarity_floor = doc.value("similarity_floor", 0.5);
    for (const auto& r : doc.at("stance_rules")) {
      const auto name = r.at("stance").get<std::string>();
      auto stance = stance_from_string(name);
      if (!stance) throw Error(ErrorKind::ConfigError, "unknown stance '" + name + "'");
      rules.stance_rules.push_back({r.at("pattern").get<std::string>(), *stance, nullptr});
    }
    for (const auto& r : doc.at("sufficiency_rules")) {
      const auto name = r.at("kind").get<std::string>();
      auto kind = decision_kind_from_string(name);
      if (!kind) throw Error(ErrorKind::ConfigError, "unknown decision kind '" + name + "'");
      rules.sufficiency_rules.push_back({r.at("pattern").get<std::string>(), *kind, nullptr});
    }
    if (doc.contains("anchors")) {
      for (const auto& [name, list] : doc.at("anchors").items()) {
        auto kind = decision_kind_from_string(name);
        if (!kind) throw Error(ErrorKind::ConfigError, "unknown anchor kind '" + name + "'");
        rules.anchors[*kind] = list.get<std::vector<std::string>>();
      }
    }
    if (doc.contains("refusal_patterns")) {
      rules.refusal_patterns = doc.at("refusal_patterns").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("rules: ") + e.what());
  }
  rules.validate();
  rules.compile();
  return rules;
}

ClassifierRules ClassifierRules::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open rules file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "rules file " + path + ": " + e.what());
  }
  return from_json(doc);
}

ClassifierRules ClassifierRules::defaults() {
  static const ClassifierRules rules = from_json(json::parse(kDefaultRulesJson));
  return rules;
}

json ClassifierRules::to_json() const {
  json doc;
  doc["version"] = version;
  doc["similarity_floor"] = similarity_floor;
  doc["stance_rules"] = json::array();
  for (const auto& r : stance_rules) {
    doc["stance_rules"].push_back({{"pattern", r.pattern}, {"stance", std::string(to_string(r.stance))}});
  }
  doc["sufficiency_rules"] = json::array();
  for (const auto& r : sufficiency_rules) {
    doc["sufficiency_rules"].push_back({{"pattern", r.pattern}, {"kind", std::string(to_string(r.kind))}});
  }
  doc["anchors"] = json::object();
  for (const auto& [kind, list] : anchors) doc["anchors"][std::string(to_string(kind))] = list;
  doc["refusal_patterns"] = refusal_patterns;
  return doc;
}

bool ClassifierRules::refusal_matches(std::string_view text) const {
  const auto norm = normalize_for_matching(text);
  return std::any_of(refusal_compiled_.begin(), refusal_compiled_.end(),
                     [&](const auto& re) { return search(*re, norm); });
}

// ---------------------------------------------------------------------------
// structural parse

std::vector<TextSpan> split_sentences(std::string_view text, std::size_t begin, std::size_t end) {
  std::vector<TextSpan> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    trim_range(text, b, e);
    if (b < e) out.push_back(TextSpan{b, e});
  };
  std::size_t start = begin;
  for (std::size_t i = begin; i < end; ++i) {
    const char c = text[i];
    if (c == '\n') {
      emit(start, i);
      start = i + 1;
      continue;
    }
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < end && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
    while (j < end && (text[j] == '*' || text[j] == '"' || text[j] == '\'' || text[j] == ')' || text[j] == ']')) ++j;
    if (j == end || is_space(text[j])) {
      emit(start, j);
      start = j;
      i = j - 1;
    }
  }
  emit(start, end);
  return out;
}

ParsedExplanation parse_explanation(std::string_view raw, StageKind /*stage*/) {
  ParsedExplanation parsed;
  parsed.source_fingerprint = fingerprint(raw);
  const auto lines = split_lines(raw);

  std::size_t first_item = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (matches(item_marker(), line_view(raw, lines[i]))) {
      first_item = i;
      break;
    }
  }

  // Without a numbered list, a single "Reason: ..." / "Additional reason: ..."
  // paragraph counts as one reason.
  std::size_t labeled = lines.size();
  if (first_item == lines.size()) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (matches(labeled_reason(), line_view(raw, lines[i]))) {
        labeled = i;
        break;
      }
    }
  }
  const std::size_t decision_end_line = std::min(first_item, labeled);

  // Decision: content lines before the list, minus headers.
  std::size_t dec_begin = raw.size(), dec_end = 0;
  for (std::size_t i = 0; i < decision_end_line; ++i) {
    const auto& l = lines[i];
    if (is_blank(raw, l) || matches(header_line(), line_view(raw, l))) continue;
    auto [b, e] = decision_content(raw, l);
    if (b >= e) continue;
    dec_begin = std::min(dec_begin, b);
    dec_end = std::max(dec_end, e);
    auto sentences = split_sentences(raw, b, e);
    parsed.decision_sentences.insert(parsed.decision_sentences.end(), sentences.begin(), sentences.end());
  }
  if (dec_begin < dec_end) parsed.decision_span = TextSpan{dec_begin, dec_end};
  else parsed.decision_span = TextSpan{0, 0};

  auto close = [&](ItemCursor& cur) {
    if (!cur.open) return;
    auto b = cur.begin, e = cur.end;
    trim_range(raw, b, e);
    if (b < e) parsed.reason_spans.push_back(TextSpan{b, e});
    cur.open = false;
  };

  if (first_item < lines.size()) {
    ItemCursor cur;
    bool blank_seen = false;
    for (std::size_t i = first_item; i < lines.size(); ++i) {
      const auto& l = lines[i];
      std::cmatch m;
      if (matches(item_marker(), line_view(raw, l), &m)) {
        close(cur);
        cur = {l.begin + static_cast<std::size_t>(m.length(0)), l.end, true};
        blank_seen = false;
      } else if (is_blank(raw, l)) {
        blank_seen = true;
      } else if (matches(header_line(), line_view(raw, l))) {
        close(cur);
        blank_seen = false;
      } else if (cur.open && (!blank_seen || is_indented(raw, l))) {
        cur.end = l.end;
        blank_seen = false;
      } else {
        break;  // trailing commentary
      }
    }
    close(cur);
  } else if (labeled < lines.size()) {
    std::cmatch m;
    matches(labeled_reason(), line_view(raw, lines[labeled]), &m);
    ItemCursor cur{lines[labeled].begin + static_cast<std::size_t>(m.length(0)), lines[labeled].end, true};
    for (std::size_t i = labeled + 1; i < lines.size(); ++i) {
      const auto& l = lines[i];
      if (is_blank(raw, l) || matches(header_line(), line_view(raw, l)) ||
          matches(labeled_reason(), line_view(raw, l))) {
        break;
      }
      cur.end = l.end;
    }
    close(cur);
  }

  parsed.refusal_candidate = parsed.reason_spans.empty();
  return parsed;
}

// ---------------------------------------------------------------------------
// classification

Stance classify_stance(std::string_view decision_text, const ClassifierRules& rules) {
  const auto norm = normalize_for_matching(decision_text);
  for (const auto& r : rules.stance_rules) {
    if (search(*r.compiled, norm)) return r.stance;
  }
  return Stance::Unresolved;
}

DecisionKind classify_decision(std::string_view decision_text, std::span<const std::string> decision_sentences,
                               StageKind /*stage*/, const ClassifierRules& rules, SimilarityProvider& sim) {
  const auto norm = normalize_for_matching(decision_text);
  if (trim(norm).empty()) return DecisionKind::Nonsensical;
  for (const auto& r : rules.sufficiency_rules) {
    if (search(*r.compiled, norm)) return r.kind;
  }

  std::vector<std::string> sentences(decision_sentences.begin(), decision_sentences.end());
  if (sentences.empty()) sentences.emplace_back(trim(decision_text));

  std::optional<DecisionKind> best;
  double best_score = -1.0;
  for (const auto& [kind, list] : rules.anchors) {
    if (list.empty()) continue;
    std::vector<TextPair> pairs;
    for (const auto& s : sentences) {
      for (const auto& a : list) pairs.emplace_back(s, a);
    }
    const auto g = sim.score_batch(pairs);
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(g.size());
    if (mean > best_score) {
      best_score = mean;
      best = kind;
    }
  }
  if (best && best_score >= rules.similarity_floor) return *best;
  // Either a restated toxicity verdict or something unrelated; neither answers the question.
  return DecisionKind::Nonsensical;
}

namespace {

bool refusal_in_parsed(std::string_view raw, const ParsedExplanation& parsed, const ClassifierRules& rules) {
  if (!parsed.reason_spans.empty()) return false;
  const auto sentences = split_sentences(raw, 0, raw.size());
  const std::size_t n = std::min<std::size_t>(2, sentences.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (rules.refusal_matches(sentences[i].view(raw))) return true;
  }
  return false;
}

}  // namespace

bool detect_refusal(std::string_view raw, const ClassifierRules& rules) {
  return refusal_in_parsed(raw, parse_explanation(raw, StageKind::justify()), rules);
}

// ---------------------------------------------------------------------------
// alignment

ParsedExplanation align_spans(const GenerationTrace& trace, const ParsedExplanation& parsed) {
  if (fingerprint(trace.full_text) != parsed.source_fingerprint) {
    throw Error(ErrorKind::AlignmentImpossible, "trace text differs from the parsed text");
  }
  const auto offsets = trace.token_offsets();
  const auto n = trace.tokens.size();

  auto align = [&](TextSpan s) {
    s.aligned = true;
    if (s.empty()) {
      s.token_start = s.token_end = 0;
      return s;
    }
    // Last token starting at or before char_start; zero-length tokens at the
    // same offset sort first, so this lands on the token that holds the byte.
    auto it = std::upper_bound(offsets.begin(), offsets.begin() + static_cast<std::ptrdiff_t>(n), s.char_start);
    const auto first = static_cast<std::size_t>(std::distance(offsets.begin(), it)) - 1;
    auto jt = std::lower_bound(offsets.begin(), offsets.end(), s.char_end);
    auto last = static_cast<std::size_t>(std::distance(offsets.begin(), jt));
    if (last > n) last = n;
    const auto cs = offsets[first];
    const auto ce = offsets[last];
    s.widened = s.widened || cs != s.char_start || ce != s.char_end;
    s.char_start = cs;
    s.char_end = ce;
    s.token_start = first;
    s.token_end = last;
    return s;
  };

  ParsedExplanation out = parsed;
  out.decision_span = align(parsed.decision_span);
  for (auto& s : out.decision_sentences) s = align(s);
  for (auto& s : out.reason_spans) s = align(s);
  return out;
}

ParsedExplanation interpret(const GenerationTrace& trace, StageKind stage, const ClassifierRules& rules,
                            SimilarityProvider& sim) {
  const std::string_view raw = trace.full_text;
  auto parsed = parse_explanation(raw, stage);
  const bool refusal = refusal_in_parsed(raw, parsed, rules);
  if (refusal) {
    parsed.decision_kind = DecisionKind::Refusal;
  } else if (stage.type == StageType::Justify) {
    parsed.stance = classify_stance(parsed.decision_span.view(raw), rules);
  } else {
    std::vector<std::string> sentences;
    for (const auto& s : parsed.decision_sentences) sentences.emplace_back(s.view(raw));
    parsed.decision_kind = classify_decision(parsed.decision_span.view(raw), sentences, stage, rules, sim);
  }
  return align_spans(trace, parsed);
}

}  // namespace haf
