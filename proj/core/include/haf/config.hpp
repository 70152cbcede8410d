#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "haf/backend.hpp"
#include "haf/ingestion.hpp"
#include "haf/metrics.hpp"
#include "haf/parsing.hpp"
#include "haf/pipeline.hpp"
#include "haf/similarity.hpp"
#include "haf/uncertainty.hpp"

namespace haf {

struct BackendConfig {
  std::string type = "http";  // "http" or "scripted"
  std::string base_url;
  std::string model;
  std::string api_key_env = "HAF_API_KEY";
  std::string script;  // scripted: path to the response script
  double logprob_scale = 1.0;
  std::size_t max_in_flight = 8;
  int max_retries = 3;
  int timeout_s = 120;
};

struct SimilarityConfig {
  std::string type = "embedding";  // embedding, remote_scorer, lexical, scripted, constant
  std::string base_url;
  std::string model;
  std::string api_key_env = "HAF_API_KEY";
  std::string score_url;
  std::string name;
  std::string file;  // scripted: overrides file
  double value = 0.0;  // constant
  std::string id;      // constant
};

struct Config {
  BackendConfig backend;
  GenerationParams generation;
  SimilarityConfig similarity;
  std::optional<SimilarityConfig> compare_a;
  std::optional<SimilarityConfig> compare_b;
  MetricWeights weights;
  std::string rules_path;  // empty: built-in rules
  PromptTemplates templates = PromptTemplates::defaults();
  SamplingPolicy sampling;
  SchemaMap schema;
  std::size_t concurrency = 8;
  bool fixed_timestamps = false;
  DecisionConfidenceMode decision_confidence = DecisionConfidenceMode::PerSentenceMean;

  /// Reads a JSON config. `${NAME}` inside any string is replaced by the
  /// environment variable NAME (ConfigError when unset). Relative paths are
  /// resolved against the config file's directory.
  static Config load(const std::filesystem::path& path);
  static Config from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

  /// Throws ConfigError (or InvalidWeights / InvalidTemplate) on bad values.
  void validate() const;

  ClassifierRules rules() const;
};

/// Replaces ${NAME} references with environment values.
std::string interpolate_env(const std::string& text);

std::unique_ptr<Backend> make_backend(const BackendConfig& config);
std::shared_ptr<SimilarityProvider> make_similarity(const SimilarityConfig& config);

std::string to_string(DecisionConfidenceMode mode);
DecisionConfidenceMode decision_confidence_mode_from_string(const std::string& s);

}  // namespace haf
