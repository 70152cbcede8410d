#pragma once

#include <map>
#include <memory>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "haf/model.hpp"
#include "haf/similarity.hpp"

namespace haf {

struct StanceRule {
  std::string pattern;  // ECMAScript regex over normalised lower-case text
  Stance stance = Stance::Unresolved;
  std::shared_ptr<const std::regex> compiled;
};

struct SufficiencyRule {
  std::string pattern;
  DecisionKind kind = DecisionKind::Sufficient;
  std::shared_ptr<const std::regex> compiled;
};

/// Keyword tables and anchor sentences used to classify decisions. Rules are
/// ordered; the first match wins. Matching runs on lower-cased text with
/// markdown emphasis removed and typographic apostrophes folded to '.
struct ClassifierRules {
  std::string version;
  std::vector<StanceRule> stance_rules;
  std::vector<SufficiencyRule> sufficiency_rules;
  std::map<DecisionKind, std::vector<std::string>> anchors;
  std::vector<std::string> refusal_patterns;
  double similarity_floor = 0.5;

  static ClassifierRules defaults();
  static ClassifierRules from_json(const nlohmann::json& doc);
  static ClassifierRules from_file(const std::string& path);
  nlohmann::json to_json() const;

  /// Throws ConfigError on empty rule lists, bad regexes or a floor outside [0,1].
  void validate() const;

  bool refusal_matches(std::string_view text) const;

 private:
  void compile();
  std::vector<std::shared_ptr<const std::regex>> refusal_compiled_;
};

/// Lower-case, drop '*', fold U+2019 to '\''.
std::string normalize_for_matching(std::string_view text);

/// Sentence spans inside [begin, end) of `text`: split after terminal
/// punctuation followed by whitespace, and at line breaks. Spans are trimmed.
std::vector<TextSpan> split_sentences(std::string_view text, std::size_t begin, std::size_t end);

/// Structural parse: decision before the first numbered item, reasons as the
/// numbered items. Total: never throws, unparseable text yields the whole
/// text as the decision and no reasons.
ParsedExplanation parse_explanation(std::string_view raw, StageKind stage);

Stance classify_stance(std::string_view decision_text, const ClassifierRules& rules);

/// Keyword pass, then anchor-similarity fallback; Nonsensical when nothing
/// addresses sufficiency.
DecisionKind classify_decision(std::string_view decision_text, std::span<const std::string> decision_sentences,
                               StageKind stage, const ClassifierRules& rules, SimilarityProvider& sim);

bool detect_refusal(std::string_view raw, const ClassifierRules& rules);

/// Fill token ranges. Spans splitting a token are widened to token
/// boundaries and flagged. Throws AlignmentImpossible when the trace text is
/// not the text that was parsed.
ParsedExplanation align_spans(const GenerationTrace& trace, const ParsedExplanation& parsed);

/// parse + refusal check + stance / decision classification + alignment.
ParsedExplanation interpret(const GenerationTrace& trace, StageKind stage, const ClassifierRules& rules,
                            SimilarityProvider& sim);

}  // namespace haf
