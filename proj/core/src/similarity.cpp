#include "haf/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "haf/backend.hpp"
#include "haf/error.hpp"
#include "haf/model.hpp"

namespace haf {

using nlohmann::json;

double clamp_unit(double raw) {
  if (!std::isfinite(raw)) throw Error(ErrorKind::ProviderUnreachable, "provider returned a non-finite score");
  return std::clamp(raw, 0.0, 1.0);
}

double SimilarityProvider::score(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::EmptyText, "similarity of an empty string");
  return clamp_unit(raw_score(a, b));
}

std::vector<double> SimilarityProvider::score_batch(std::span<const TextPair> pairs) {
  for (const auto& [a, b] : pairs) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::EmptyText, "similarity of an empty string");
  }
  auto out = raw_batch(pairs);
  if (out.size() != pairs.size()) {
    throw Error(ErrorKind::ProviderUnreachable, "provider returned " + std::to_string(out.size()) +
                                                    " scores for " + std::to_string(pairs.size()) +
                                                    " pairs");
  }
  for (auto& v : out) v = clamp_unit(v);
  return out;
}

std::vector<double> SimilarityProvider::raw_batch(std::span<const TextPair> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(raw_score(a, b));
  return out;
}

namespace {

json post_json(const std::string& url, const json& body, const std::string& api_key,
               std::chrono::seconds timeout) {
  const auto parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(timeout);
  if (!api_key.empty()) client.set_bearer_token_auth(api_key);
  const auto path = parts.path_prefix.empty() ? std::string("/") : parts.path_prefix;
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::ProviderUnreachable, url + ": " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorKind::ProviderUnreachable, url + ": HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderUnreachable, url + ": " + e.what());
  }
}

double cosine(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw Error(ErrorKind::ProviderUnreachable, "embedding dimension mismatch");
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.insert(std::move(cur));
  return words;
}

}  // namespace

// ---------------------------------------------------------------------------

EmbeddingProvider::EmbeddingProvider(Options options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw Error(ErrorKind::ConfigError, "embedding base_url is empty");
}

std::vector<std::vector<double>> EmbeddingProvider::embed(const std::vector<std::string>& texts) {
  const auto parts = split_url(options_.base_url);
  const json body{{"model", options_.model}, {"input", texts}};
  auto doc = post_json(parts.origin + parts.path_prefix + "/v1/embeddings", body, options_.api_key,
                       options_.timeout);
  if (!doc.contains("data") || !doc["data"].is_array() || doc["data"].size() != texts.size()) {
    throw Error(ErrorKind::ProviderUnreachable, "embedding response lacks data[]");
  }
  std::vector<std::vector<double>> out(texts.size());
  for (std::size_t pos = 0; pos < doc["data"].size(); ++pos) {
    const auto& item = doc["data"][pos];
    const auto idx = item.value("index", pos);
    if (idx >= out.size()) throw Error(ErrorKind::ProviderUnreachable, "embedding index out of range");
    out[idx] = item.at("embedding").get<std::vector<double>>();
  }
  return out;
}

double EmbeddingProvider::raw_score(std::string_view a, std::string_view b) {
  const TextPair pair{std::string(a), std::string(b)};
  return raw_batch(std::span<const TextPair>(&pair, 1)).front();
}

std::vector<double> EmbeddingProvider::raw_batch(std::span<const TextPair> pairs) {
  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    std::set<std::string> seen;
    for (const auto& [a, b] : pairs) {
      for (const auto* t : {&a, &b}) {
        if (!embeddings_.contains(*t) && seen.insert(*t).second) missing.push_back(*t);
      }
    }
  }
  if (!missing.empty()) {
    auto vectors = embed(missing);
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < missing.size(); ++i) embeddings_[missing[i]] = std::move(vectors[i]);
  }
  std::vector<double> out;
  out.reserve(pairs.size());
  std::lock_guard lock(mutex_);
  for (const auto& [a, b] : pairs) out.push_back(cosine(embeddings_.at(a), embeddings_.at(b)));
  return out;
}

// ---------------------------------------------------------------------------

RemoteScorerProvider::RemoteScorerProvider(Options options) : options_(std::move(options)) {
  if (options_.score_url.empty()) throw Error(ErrorKind::ConfigError, "scorer score_url is empty");
}

double RemoteScorerProvider::raw_score(std::string_view a, std::string_view b) {
  const TextPair pair{std::string(a), std::string(b)};
  return raw_batch(std::span<const TextPair>(&pair, 1)).front();
}

std::vector<double> RemoteScorerProvider::raw_batch(std::span<const TextPair> pairs) {
  json body_pairs = json::array();
  for (const auto& [a, b] : pairs) body_pairs.push_back(json::array({a, b}));
  auto doc = post_json(options_.score_url, json{{"pairs", body_pairs}}, options_.api_key,
                       options_.timeout);
  if (!doc.contains("scores") || !doc["scores"].is_array()) {
    throw Error(ErrorKind::ProviderUnreachable, "scorer response lacks scores[]");
  }
  return doc["scores"].get<std::vector<double>>();
}

// ---------------------------------------------------------------------------

double LexicalProvider::raw_score(std::string_view a, std::string_view b) {
  const auto wa = word_set(a);
  const auto wb = word_set(b);
  if (wa.empty() && wb.empty()) return trim(a) == trim(b) ? 1.0 : 0.0;
  std::size_t common = 0;
  for (const auto& w : wa) common += wb.count(w);
  const auto uni = wa.size() + wb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

ConstantProvider::ConstantProvider(double value, std::string id) : value_(value), id_(std::move(id)) {
  if (id_.empty()) id_ = "constant:" + std::to_string(value);
}

// ---------------------------------------------------------------------------

ScriptedSimilarityProvider::ScriptedSimilarityProvider(
    std::map<std::pair<std::string, std::string>, double> overrides)
    : overrides_(std::move(overrides)) {}

ScriptedSimilarityProvider ScriptedSimilarityProvider::from_json(const json& doc) {
  std::map<std::pair<std::string, std::string>, double> overrides;
  if (doc.contains("pairs")) {
    for (const auto& p : doc.at("pairs")) {
      overrides[{p.at("a").get<std::string>(), p.at("b").get<std::string>()}] = p.at("score").get<double>();
    }
  }
  return ScriptedSimilarityProvider(std::move(overrides));
}

ScriptedSimilarityProvider ScriptedSimilarityProvider::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open similarity script " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "similarity script " + path + ": " + e.what());
  }
}

double ScriptedSimilarityProvider::raw_score(std::string_view a, std::string_view b) {
  std::pair<std::string, std::string> key{std::string(a), std::string(b)};
  if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
  std::swap(key.first, key.second);
  if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
  return fallback_.score(a, b);
}

// ---------------------------------------------------------------------------

CachedProvider::CachedProvider(std::shared_ptr<SimilarityProvider> inner, std::string cache_file,
                               std::string provider_id)
    : inner_(std::move(inner)), file_(std::move(cache_file)), id_(std::move(provider_id)) {
  if (id_.empty()) {
    if (!inner_) throw Error(ErrorKind::ConfigError, "cache-only provider needs an explicit id");
    id_ = inner_->provider_id();
  }
  symmetric_ = inner_ ? inner_->symmetric() : false;
  if (!file_.empty()) load();
}

std::string CachedProvider::make_key(std::string_view a, std::string_view b) {
  return fingerprint(a) + ":" + fingerprint(b);
}

void CachedProvider::load() {
  std::ifstream in(file_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      entries_[{j.at("provider").get<std::string>(), j.at("key").get<std::string>()}] =
          j.at("score").get<double>();
    } catch (const json::exception&) {
      // An interrupted append can leave a torn final line; anything else is corruption.
      if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorKind::CorruptRecord, file_ + ":" + std::to_string(lineno));
      }
    }
  }
}

void CachedProvider::append(const std::string& key, double value) {
  if (file_.empty()) return;
  const auto line = json{{"provider", id_}, {"key", key}, {"score", value}}.dump() + "\n";
  std::lock_guard lock(file_mutex_);
  std::ofstream out(file_, std::ios::app | std::ios::binary);
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
}

void CachedProvider::write_canonical() const {
  if (file_.empty()) return;
  std::lock_guard file_lock(file_mutex_);
  std::lock_guard lock(mutex_);
  const auto tmp = file_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    for (const auto& [k, v] : entries_) {
      out << json{{"provider", k.first}, {"key", k.second}, {"score", v}}.dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, file_);
}

std::size_t CachedProvider::provider_calls() const {
  std::lock_guard lock(mutex_);
  return provider_calls_;
}

std::size_t CachedProvider::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

double CachedProvider::raw_score(std::string_view a, std::string_view b) {
  const TextPair pair{std::string(a), std::string(b)};
  return raw_batch(std::span<const TextPair>(&pair, 1)).front();
}

std::vector<double> CachedProvider::raw_batch(std::span<const TextPair> pairs) {
  std::vector<double> out(pairs.size(), 0.0);
  std::vector<std::pair<std::size_t, std::shared_future<double>>> waiting;
  std::vector<std::size_t> claimed;
  std::vector<std::string> claimed_keys;
  std::vector<std::promise<double>> promises;

  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto key = make_key(pairs[i].first, pairs[i].second);
      if (auto it = entries_.find({id_, key}); it != entries_.end()) {
        out[i] = it->second;
        continue;
      }
      if (symmetric_) {
        const auto rev = make_key(pairs[i].second, pairs[i].first);
        if (auto it = entries_.find({id_, rev}); it != entries_.end()) {
          out[i] = it->second;
          continue;
        }
      }
      if (auto it = in_flight_.find(key); it != in_flight_.end()) {
        waiting.emplace_back(i, it->second);
        continue;
      }
      if (!inner_) throw Error(ErrorKind::CacheMiss, "similarity pair not in cache (" + id_ + ")");
      promises.emplace_back();
      auto fut = promises.back().get_future().share();
      in_flight_.emplace(key, fut);
      claimed.push_back(i);
      claimed_keys.push_back(key);
    }
  }

  if (!claimed.empty()) {
    std::vector<TextPair> request;
    request.reserve(claimed.size());
    for (auto i : claimed) request.push_back(pairs[i]);
    std::vector<double> scores;
    try {
      scores = inner_->score_batch(request);
    } catch (...) {
      std::lock_guard lock(mutex_);
      for (std::size_t k = 0; k < claimed.size(); ++k) {
        promises[k].set_exception(std::current_exception());
        in_flight_.erase(claimed_keys[k]);
      }
      throw;
    }
    {
      std::lock_guard lock(mutex_);
      provider_calls_ += claimed.size();
      for (std::size_t k = 0; k < claimed.size(); ++k) {
        entries_[{id_, claimed_keys[k]}] = scores[k];
        in_flight_.erase(claimed_keys[k]);
        out[claimed[k]] = scores[k];
      }
    }
    for (std::size_t k = 0; k < claimed.size(); ++k) {
      append(claimed_keys[k], scores[k]);
      promises[k].set_value(scores[k]);
    }
  }
  for (auto& [i, fut] : waiting) out[i] = fut.get();
  return out;
}

// ---------------------------------------------------------------------------

RelevanceVector token_relevance(SimilarityProvider& provider, std::string_view span_text,
                                std::span<const std::string> token_texts) {
  std::string joined;
  for (const auto& t : token_texts) joined += t;
  if (joined != span_text) {
    throw Error(ErrorKind::InvalidInput, "token texts do not concatenate to the span text");
  }
  const auto n = token_texts.size();
  RelevanceVector rel;
  if (n == 0) return rel;
  if (n == 1 || trim(span_text).empty()) {
    rel.raw.assign(n, 1.0);
    rel.normalized.assign(n, 1.0 / static_cast<double>(n));
    rel.degenerate = true;
    return rel;
  }

  // Leave-one-out strings; removal leaving only whitespace scores g = 0.
  std::vector<TextPair> request;
  std::vector<std::size_t> request_index;
  rel.raw.assign(n, 1.0);
  const std::string full(span_text);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::string rest = full.substr(0, offset) + full.substr(offset + token_texts[i].size());
    offset += token_texts[i].size();
    if (trim(rest).empty()) continue;
    request.emplace_back(full, std::move(rest));
    request_index.push_back(i);
  }
  if (!request.empty()) {
    const auto g = provider.score_batch(request);
    for (std::size_t k = 0; k < g.size(); ++k) rel.raw[request_index[k]] = 1.0 - std::fabs(g[k]);
  }

  const double mass = std::accumulate(rel.raw.begin(), rel.raw.end(), 0.0);
  if (mass <= 0.0) {
    rel.normalized.assign(n, 1.0 / static_cast<double>(n));
    rel.degenerate = true;
  } else {
    rel.normalized.reserve(n);
    for (double r : rel.raw) rel.normalized.push_back(r / mass);
  }
  return rel;
}

std::vector<ProviderDifference> compare_providers(SimilarityProvider& a, SimilarityProvider& b,
                                                  std::span<const LabeledPairs> sets) {
  std::vector<ProviderDifference> out;
  for (const auto& set : sets) {
    if (set.pairs.empty()) throw Error(ErrorKind::EmptyPairSet, "pair set '" + set.label + "' is empty");
  }
  for (const auto& set : sets) {
    const auto ga = a.score_batch(set.pairs);
    const auto gb = b.score_batch(set.pairs);
    double total = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) total += std::fabs(ga[i] - gb[i]);
    out.push_back({set.label, total / static_cast<double>(ga.size()), ga.size()});
  }
  return out;
}

}  // namespace haf
