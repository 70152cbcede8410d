#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "haf/backend.hpp"
#include "haf/error.hpp"
#include "haf/metrics.hpp"
#include "haf/model.hpp"
#include "haf/parsing.hpp"
#include "haf/scoring.hpp"
#include "haf/similarity.hpp"
#include "haf/uncertainty.hpp"

namespace haf {

/// Prompt templates with {TEXT}, {REASONS} and {REASON} placeholders.
struct PromptTemplates {
  std::string justify;
  std::string uphold_internal;
  std::string uphold_external;
  std::string uphold_suf;
  std::string uphold_nec;
  // Used for non-toxic stances at the uphold-reason stage when `stance_adaptive` is set.
  std::string uphold_internal_non_toxic;
  std::string uphold_external_non_toxic;
  bool stance_adaptive = false;

  static PromptTemplates defaults();
  /// Keys present in `doc` override the defaults. Validates the result.
  static PromptTemplates from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  /// Throws InvalidTemplate when a template lacks a placeholder its stage needs.
  void validate() const;
};

/// Numbered list "1. a\n2. b" in the given order.
std::string render_reasons(std::span<const std::string> reasons);

/// Instantiates the template for `stage`. Substitution is single-pass, so
/// placeholder-like text inside the sample or reasons is left alone.
/// Throws NoJustifyReasons for uphold stages without reasons and
/// NecRequiresTwoReasons for a leave-one-out over fewer than two.
std::string build_prompt(const PromptTemplates& templates, StageKind stage, const InputSample& sample,
                         std::span<const std::string> justify_reasons, Stance stance = Stance::Toxic);

/// Failure of one stage of one sample; `kind()` is the underlying error.
class StageFailure : public Error {
 public:
  StageFailure(const Error& cause, std::string stage) : Error(cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

using Clock = std::function<std::int64_t()>;

/// Wall clock in milliseconds since the epoch.
std::int64_t system_clock_ms();

struct PipelineContext {
  Backend& backend;
  SimilarityProvider& sim;
  const ClassifierRules& rules;
  const PromptTemplates& templates;
  const MetricWeights& weights;
  GenerationParams params;
  DecisionConfidenceMode mode = DecisionConfidenceMode::PerSentenceMean;
  Clock clock = system_clock_ms;
};

struct SampleOutcome {
  SampleStages stages;
  MetricRecord metrics;
  std::size_t generated = 0;  // backend calls made for this sample
};

/// Runs the missing stages of one sample, then scores it. `existing`
/// holds stages persisted by an earlier run; they are not regenerated.
/// `on_stage` sees every newly generated record before the next stage
/// starts, so partial progress survives a failure.
SampleOutcome run_sample(const InputSample& sample, const PipelineContext& ctx, SampleStages existing = {},
                         const std::function<void(const StageRecord&)>& on_stage = {});

struct RunManifest {
  std::string tool_version;
  std::string model_id;
  std::string endpoint;
  GenerationParams params;
  MetricWeights weights;
  nlohmann::json rules;
  nlohmann::json templates;
  std::string similarity_provider;
  std::string decision_confidence_mode = "per_sentence_mean";
  std::string dataset_fingerprint;
  std::uint64_t seed = 0;
  nlohmann::json sampling;
  nlohmann::json schema;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

/// Run directory access. Appends are whole lines under a lock and flushed
/// immediately.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path manifest_path() const { return dir_ / "manifest.json"; }
  std::filesystem::path samples_path() const { return dir_ / "samples.jsonl"; }
  std::filesystem::path metrics_path() const { return dir_ / "metrics.jsonl"; }
  std::filesystem::path errors_path() const { return dir_ / "errors.jsonl"; }
  std::filesystem::path similarity_cache_path() const { return dir_ / "similarity_cache.jsonl"; }
  std::filesystem::path stages_dir() const { return dir_ / "stages"; }
  std::filesystem::path stage_path(StageType type) const;

  bool has_manifest() const;
  RunManifest read_manifest() const;
  /// Writes the manifest when absent; otherwise throws ManifestMismatch if
  /// the stored one differs.
  void ensure_manifest(const RunManifest& manifest);

  void write_samples(const std::vector<InputSample>& samples);
  std::vector<InputSample> read_samples() const;

  void append_stage(const StageRecord& record);
  void append_metric(const MetricRecord& record);
  void append_error(const std::string& sample_id, const std::string& stage, const std::string& kind,
                    const std::string& message);

  /// Stage records grouped by sample. Throws CorruptRecord with file and line.
  std::map<std::string, SampleStages> read_stages() const;
  std::vector<MetricRecord> read_metrics() const;

  /// Replaces metrics.jsonl with `records` in the given order.
  void write_metrics(const std::vector<MetricRecord>& records);

  /// Cuts any unterminated final line left by an interrupted append.
  void repair();

  /// Sorts every record file by sample order (then stage index) so the
  /// directory content does not depend on thread scheduling.
  void canonicalize();

 private:
  void append_line(const std::filesystem::path& path, const std::string& line);

  std::filesystem::path dir_;
  std::mutex mutex_;
};

struct RunOptions {
  std::size_t concurrency = 8;
  std::function<void(const std::string&)> log;
};

struct RunReport {
  std::size_t samples = 0;
  std::size_t completed = 0;       // metric record present after the run
  std::size_t resumed = 0;         // already complete before this run
  std::size_t failed = 0;          // recorded in errors.jsonl
  std::size_t backend_calls = 0;
  std::optional<std::string> fatal;  // MissingLogprobs or another run-stopping error
};

/// Processes every sample not yet scored in `store`, `concurrency` samples at
/// a time. MissingLogprobs stops the run; other errors are logged per sample.
RunReport run_dataset(const std::vector<InputSample>& samples, const PipelineContext& ctx, RunStore& store,
                      const RunOptions& options);

}  // namespace haf
