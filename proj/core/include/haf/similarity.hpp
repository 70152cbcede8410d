#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace haf {

using TextPair = std::pair<std::string, std::string>;

/// Semantic similarity g(a, b) in [0, 1]; diversity is h = 1 - g.
///
/// Callers may pass arguments in either order. Only the range is
/// contractual: g(a, a) == 1 is not assumed, because cross-encoders do not
/// guarantee it. Implementations must tolerate concurrent calls.
class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;

  /// Throws EmptyText when either argument is empty, ProviderUnreachable on
  /// transport failure. The raw provider output is clamped into [0, 1].
  double score(std::string_view a, std::string_view b);
  std::vector<double> score_batch(std::span<const TextPair> pairs);

  double diversity(std::string_view a, std::string_view b) { return 1.0 - score(a, b); }

  virtual std::string provider_id() const = 0;
  /// True when g(a, b) == g(b, a) for every input; lets caches reuse either order.
  virtual bool symmetric() const { return false; }

 protected:
  virtual double raw_score(std::string_view a, std::string_view b) = 0;
  virtual std::vector<double> raw_batch(std::span<const TextPair> pairs);
};

double clamp_unit(double raw);

/// Embedding endpoint + cosine similarity, mapped to [0,1] by clamp(cos, 0, 1).
/// POST <base_url>/v1/embeddings {model, input:[...]}, reads data[*].embedding.
class EmbeddingProvider final : public SimilarityProvider {
 public:
  struct Options {
    std::string base_url;
    std::string model;
    std::string api_key;
    std::chrono::seconds timeout{60};
  };
  explicit EmbeddingProvider(Options options);

  std::string provider_id() const override { return "embedding:" + options_.model; }
  bool symmetric() const override { return true; }

 protected:
  double raw_score(std::string_view a, std::string_view b) override;
  std::vector<double> raw_batch(std::span<const TextPair> pairs) override;

 private:
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

  Options options_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> embeddings_;
};

/// Remote pair scorer such as a hosted cross-encoder.
/// POST <score_url> {pairs:[[a,b],...]} -> {scores:[...]}.
class RemoteScorerProvider final : public SimilarityProvider {
 public:
  struct Options {
    std::string score_url;
    std::string name = "remote";
    std::string api_key;
    std::chrono::seconds timeout{60};
  };
  explicit RemoteScorerProvider(Options options);

  std::string provider_id() const override { return "scorer:" + options_.name; }

 protected:
  double raw_score(std::string_view a, std::string_view b) override;
  std::vector<double> raw_batch(std::span<const TextPair> pairs) override;

 private:
  Options options_;
};

/// Jaccard overlap of lower-cased word sets. Offline and deterministic; used
/// for mock runs and as the fallback of the scripted provider.
class LexicalProvider final : public SimilarityProvider {
 public:
  std::string provider_id() const override { return "lexical"; }
  bool symmetric() const override { return true; }

 protected:
  double raw_score(std::string_view a, std::string_view b) override;
};

/// Always returns the same raw value (clamped by `score`). Test stub.
class ConstantProvider final : public SimilarityProvider {
 public:
  explicit ConstantProvider(double value, std::string id = {});
  std::string provider_id() const override { return id_; }
  bool symmetric() const override { return true; }

 protected:
  double raw_score(std::string_view, std::string_view) override { return value_; }

 private:
  double value_;
  std::string id_;
};

/// Exact-pair overrides on top of the lexical provider. File format:
///   {"pairs": [{"a": "...", "b": "...", "score": 0.8}, ...]}
/// Overrides apply in both argument orders.
class ScriptedSimilarityProvider final : public SimilarityProvider {
 public:
  explicit ScriptedSimilarityProvider(std::map<std::pair<std::string, std::string>, double> overrides);
  static ScriptedSimilarityProvider from_json(const nlohmann::json& doc);
  static ScriptedSimilarityProvider from_file(const std::string& path);

  std::string provider_id() const override { return "scripted"; }
  bool symmetric() const override { return true; }

 protected:
  double raw_score(std::string_view a, std::string_view b) override;

 private:
  std::map<std::pair<std::string, std::string>, double> overrides_;
  LexicalProvider fallback_;
};

/// Memoising wrapper with an optional append-only JSONL file
/// (`{"provider":..., "key":..., "score":...}` per line).
///
/// Each unique ordered pair reaches the inner provider at most once, even
/// under concurrent callers. With a null inner provider the cache is
/// read-only and a miss throws CacheMiss; this is how offline re-scoring
/// guarantees it never touches the network.
class CachedProvider final : public SimilarityProvider {
 public:
  CachedProvider(std::shared_ptr<SimilarityProvider> inner, std::string cache_file = {},
                 std::string provider_id = {});

  std::string provider_id() const override { return id_; }
  bool symmetric() const override { return symmetric_; }

  /// Number of pairs forwarded to the inner provider.
  std::size_t provider_calls() const;
  std::size_t size() const;

  /// Rewrite the cache file sorted by (provider, key).
  void write_canonical() const;

  static std::string make_key(std::string_view a, std::string_view b);

 protected:
  double raw_score(std::string_view a, std::string_view b) override;
  std::vector<double> raw_batch(std::span<const TextPair> pairs) override;

 private:
  void load();
  void append(const std::string& key, double value);

  std::shared_ptr<SimilarityProvider> inner_;
  std::string file_;
  std::string id_;
  bool symmetric_ = false;

  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, double> entries_;  // (provider, key) -> score
  std::unordered_map<std::string, std::shared_future<double>> in_flight_;
  std::size_t provider_calls_ = 0;
  mutable std::mutex file_mutex_;
};

struct RelevanceVector {
  std::vector<double> raw;
  std::vector<double> normalized;
  bool degenerate = false;  // single token or zero raw mass; normalized is uniform
};

/// Leave-one-out token relevance: raw[i] = 1 - |g(span, span without token i)|,
/// normalized = raw / sum(raw). Single-token spans get [1]; zero mass falls
/// back to uniform weights.
RelevanceVector token_relevance(SimilarityProvider& provider, std::string_view span_text,
                                std::span<const std::string> token_texts);

struct LabeledPairs {
  std::string label;
  std::vector<TextPair> pairs;
};

struct ProviderDifference {
  std::string label;
  double mean_abs_difference = 0.0;
  std::size_t pairs = 0;
};

/// Mean |g_a - g_b| per labeled set. Throws EmptyPairSet for an empty set.
std::vector<ProviderDifference> compare_providers(SimilarityProvider& a, SimilarityProvider& b,
                                                  std::span<const LabeledPairs> sets);

}  // namespace haf
