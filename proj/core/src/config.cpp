#include "haf/config.hpp"

#include <cstdlib>
#include <fstream>

#include "haf/error.hpp"

namespace haf {

using nlohmann::json;

std::string interpolate_env(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, 2, "${") == 0) {
      const auto close = text.find('}', i + 2);
      if (close == std::string::npos) throw Error(ErrorKind::ConfigError, "unterminated ${ in '" + text + "'");
      const auto name = text.substr(i + 2, close - i - 2);
      const char* value = std::getenv(name.c_str());
      if (value == nullptr) throw Error(ErrorKind::ConfigError, "environment variable " + name + " is not set");
      out += value;
      i = close + 1;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

namespace {

void interpolate_all(json& doc) {
  if (doc.is_string()) {
    doc = interpolate_env(doc.get<std::string>());
  } else if (doc.is_structured()) {
    for (auto& child : doc) interpolate_all(child);
  }
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

SimilarityConfig similarity_from_json(const json& doc, const std::filesystem::path& base) {
  SimilarityConfig s;
  s.type = doc.value("type", s.type);
  s.base_url = doc.value("base_url", s.base_url);
  s.model = doc.value("model", s.model);
  s.api_key_env = doc.value("api_key_env", s.api_key_env);
  s.score_url = doc.value("score_url", s.score_url);
  s.name = doc.value("name", s.name);
  s.file = resolve(base, doc.value("file", s.file));
  s.value = doc.value("value", s.value);
  s.id = doc.value("id", s.id);
  return s;
}

void validate_similarity(const SimilarityConfig& s, const std::string& where) {
  if (s.type == "embedding") {
    if (s.base_url.empty() || s.model.empty()) {
      throw Error(ErrorKind::ConfigError, where + ": embedding needs base_url and model");
    }
  } else if (s.type == "remote_scorer") {
    if (s.score_url.empty()) throw Error(ErrorKind::ConfigError, where + ": remote_scorer needs score_url");
  } else if (s.type == "scripted") {
    if (s.file.empty()) throw Error(ErrorKind::ConfigError, where + ": scripted needs file");
  } else if (s.type == "constant") {
    if (!(s.value >= 0.0 && s.value <= 1.0)) throw Error(ErrorKind::ConfigError, where + ": value must lie in [0,1]");
  } else if (s.type != "lexical") {
    throw Error(ErrorKind::ConfigError, where + ": unknown similarity type '" + s.type + "'");
  }
}

std::string api_key(const std::string& env) {
  if (env.empty()) return {};
  const char* v = std::getenv(env.c_str());
  return v ? v : "";
}

}  // namespace

std::string to_string(DecisionConfidenceMode mode) {
  return mode == DecisionConfidenceMode::Concatenated ? "concatenated" : "per_sentence_mean";
}

DecisionConfidenceMode decision_confidence_mode_from_string(const std::string& s) {
  if (s == "per_sentence_mean") return DecisionConfidenceMode::PerSentenceMean;
  if (s == "concatenated") return DecisionConfidenceMode::Concatenated;
  throw Error(ErrorKind::ConfigError, "decision_confidence must be 'per_sentence_mean' or 'concatenated'");
}

Config Config::from_json(const json& input, const std::filesystem::path& base) {
  json doc = input;
  interpolate_all(doc);
  Config c;
  try {
    if (!doc.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
    if (doc.contains("backend")) {
      const auto& b = doc.at("backend");
      c.backend.type = b.value("type", c.backend.type);
      c.backend.base_url = b.value("base_url", c.backend.base_url);
      c.backend.model = b.value("model", c.backend.model);
      c.backend.api_key_env = b.value("api_key_env", c.backend.api_key_env);
      c.backend.script = resolve(base, b.value("script", c.backend.script));
      c.backend.logprob_scale = b.value("logprob_scale", c.backend.logprob_scale);
      c.backend.max_in_flight = b.value("max_in_flight", c.backend.max_in_flight);
      c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
      c.backend.timeout_s = b.value("timeout_s", c.backend.timeout_s);
    }
    if (doc.contains("generation")) {
      const auto& g = doc.at("generation");
      c.generation.temperature = g.value("temperature", c.generation.temperature);
      c.generation.top_p = g.value("top_p", c.generation.top_p);
      c.generation.max_new_tokens = g.value("max_new_tokens", c.generation.max_new_tokens);
    }
    if (doc.contains("similarity")) c.similarity = similarity_from_json(doc.at("similarity"), base);
    if (doc.contains("compare")) {
      const auto& cmp = doc.at("compare");
      c.compare_a = similarity_from_json(cmp.at("a"), base);
      c.compare_b = similarity_from_json(cmp.at("b"), base);
    }
    if (doc.contains("weights")) c.weights = MetricWeights::from_json(doc.at("weights"));
    c.rules_path = resolve(base, doc.value("rules", std::string()));
    if (doc.contains("templates")) c.templates = PromptTemplates::from_json(doc.at("templates"));
    if (doc.contains("sampling")) c.sampling = SamplingPolicy::from_json(doc.at("sampling"));
    if (doc.contains("schema")) c.schema = SchemaMap::from_json(doc.at("schema"));
    else c.schema.prob_column = "toxicity";
    c.concurrency = doc.value("concurrency", c.concurrency);
    c.fixed_timestamps = doc.value("fixed_timestamps", c.fixed_timestamps);
    if (doc.contains("decision_confidence")) {
      c.decision_confidence = decision_confidence_mode_from_string(doc.at("decision_confidence").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  return from_json(doc, path.parent_path());
}

void Config::validate() const {
  if (backend.type == "http") {
    if (backend.base_url.empty() || backend.model.empty()) {
      throw Error(ErrorKind::ConfigError, "backend: http needs base_url and model");
    }
  } else if (backend.type == "scripted") {
    if (backend.script.empty()) throw Error(ErrorKind::ConfigError, "backend: scripted needs script");
  } else {
    throw Error(ErrorKind::ConfigError, "backend: unknown type '" + backend.type + "'");
  }
  if (!(backend.logprob_scale > 0.0)) throw Error(ErrorKind::ConfigError, "backend: logprob_scale must be positive");
  if (backend.max_in_flight == 0) throw Error(ErrorKind::ConfigError, "backend: max_in_flight must be positive");
  if (backend.max_retries < 0 || backend.timeout_s <= 0) {
    throw Error(ErrorKind::ConfigError, "backend: max_retries must be >= 0 and timeout_s > 0");
  }
  generation.validate();
  validate_similarity(similarity, "similarity");
  if (compare_a) validate_similarity(*compare_a, "compare.a");
  if (compare_b) validate_similarity(*compare_b, "compare.b");
  weights.validate();
  templates.validate();
  sampling.validate();
  schema.validate();
  if (concurrency == 0) throw Error(ErrorKind::ConfigError, "concurrency must be positive");
}

ClassifierRules Config::rules() const {
  return rules_path.empty() ? ClassifierRules::defaults() : ClassifierRules::from_file(rules_path);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.type == "scripted") {
    // The backend holds an atomic counter and cannot move; build it in place.
    return std::unique_ptr<Backend>(
        new ScriptedBackend(ScriptedBackend::from_file(config.script, config.model.empty() ? "scripted" : config.model)));
  }
  HttpBackendOptions o;
  o.base_url = config.base_url;
  o.model = config.model;
  o.api_key = api_key(config.api_key_env);
  o.logprob_scale = config.logprob_scale;
  o.max_in_flight = config.max_in_flight;
  o.max_retries = config.max_retries;
  o.timeout = std::chrono::seconds(config.timeout_s);
  return std::make_unique<HttpChatBackend>(std::move(o));
}

std::shared_ptr<SimilarityProvider> make_similarity(const SimilarityConfig& config) {
  if (config.type == "embedding") {
    return std::make_shared<EmbeddingProvider>(
        EmbeddingProvider::Options{config.base_url, config.model, api_key(config.api_key_env)});
  }
  if (config.type == "remote_scorer") {
    return std::make_shared<RemoteScorerProvider>(RemoteScorerProvider::Options{
        config.score_url, config.name.empty() ? "remote" : config.name, api_key(config.api_key_env)});
  }
  if (config.type == "scripted") return std::make_shared<ScriptedSimilarityProvider>(ScriptedSimilarityProvider::from_file(config.file));
  if (config.type == "constant") {
    return std::make_shared<ConstantProvider>(config.value, config.id.empty() ? "constant" : config.id);
  }
  return std::make_shared<LexicalProvider>();
}

}  // namespace haf
