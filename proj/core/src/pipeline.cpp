#include "haf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>
#include <thread>

#include "haf/records.hpp"

namespace haf {

using nlohmann::json;

extern const char* const kDefaultTemplatesJson;  // embedded from data/default_templates.json

// ---------------------------------------------------------------------------
// templates

namespace {

constexpr std::string_view kText = "{TEXT}";
constexpr std::string_view kReasons = "{REASONS}";
constexpr std::string_view kReason = "{REASON}";

std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string_view>>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  for (std::size_t i = 0; i < tmpl.size();) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [key, value] : values) {
        if (tmpl.substr(i, key.size()) == key) {
          out.append(value);
          i += key.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[i++]);
  }
  return out;
}

void require(const std::string& tmpl, const char* name, std::initializer_list<std::string_view> placeholders) {
  for (auto p : placeholders) {
    if (tmpl.find(p) == std::string::npos) {
      throw Error(ErrorKind::InvalidTemplate, std::string(name) + " template lacks " + std::string(p));
    }
  }
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
  static const PromptTemplates t = [] {
    const auto doc = json::parse(kDefaultTemplatesJson);
    PromptTemplates p;
    p.justify = doc.at("justify").get<std::string>();
    p.uphold_internal = doc.at("uphold_internal").get<std::string>();
    p.uphold_external = doc.at("uphold_external").get<std::string>();
    p.uphold_suf = doc.at("uphold_suf").get<std::string>();
    p.uphold_nec = doc.at("uphold_nec").get<std::string>();
    p.uphold_internal_non_toxic = doc.at("uphold_internal_non_toxic").get<std::string>();
    p.uphold_external_non_toxic = doc.at("uphold_external_non_toxic").get<std::string>();
    p.stance_adaptive = doc.at("stance_adaptive").get<bool>();
    p.validate();
    return p;
  }();
  return t;
}

PromptTemplates PromptTemplates::from_json(const json& doc) {
  auto p = defaults();
  try {
    p.justify = doc.value("justify", p.justify);
    p.uphold_internal = doc.value("uphold_internal", p.uphold_internal);
    p.uphold_external = doc.value("uphold_external", p.uphold_external);
    p.uphold_suf = doc.value("uphold_suf", p.uphold_suf);
    p.uphold_nec = doc.value("uphold_nec", p.uphold_nec);
    p.uphold_internal_non_toxic = doc.value("uphold_internal_non_toxic", p.uphold_internal_non_toxic);
    p.uphold_external_non_toxic = doc.value("uphold_external_non_toxic", p.uphold_external_non_toxic);
    p.stance_adaptive = doc.value("stance_adaptive", p.stance_adaptive);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidTemplate, e.what());
  }
  p.validate();
  return p;
}

json PromptTemplates::to_json() const {
  return {{"justify", justify},
          {"uphold_internal", uphold_internal},
          {"uphold_external", uphold_external},
          {"uphold_suf", uphold_suf},
          {"uphold_nec", uphold_nec},
          {"uphold_internal_non_toxic", uphold_internal_non_toxic},
          {"uphold_external_non_toxic", uphold_external_non_toxic},
          {"stance_adaptive", stance_adaptive}};
}

void PromptTemplates::validate() const {
  require(justify, "justify", {kText});
  require(uphold_internal, "uphold_internal", {kText, kReasons});
  require(uphold_external, "uphold_external", {kText, kReasons});
  require(uphold_suf, "uphold_suf", {kText, kReason});
  require(uphold_nec, "uphold_nec", {kText, kReasons});
  if (stance_adaptive) {
    require(uphold_internal_non_toxic, "uphold_internal_non_toxic", {kText, kReasons});
    require(uphold_external_non_toxic, "uphold_external_non_toxic", {kText, kReasons});
  }
}

std::string render_reasons(std::span<const std::string> reasons) {
  std::string out;
  for (std::size_t i = 0; i < reasons.size(); ++i) {
    if (i) out.push_back('\n');
    out += std::to_string(i + 1) + ". " + reasons[i];
  }
  return out;
}

std::string build_prompt(const PromptTemplates& t, StageKind stage, const InputSample& sample,
                         std::span<const std::string> reasons, Stance stance) {
  if (stage.type == StageType::Justify) return substitute(t.justify, {{kText, sample.text}});
  if (reasons.empty()) throw Error(ErrorKind::NoJustifyReasons, "uphold stages need at least one reason");
  const bool adapt = t.stance_adaptive && stance == Stance::NonToxic;
  switch (stage.type) {
    case StageType::UpholdInternal: {
      const auto all = render_reasons(reasons);
      return substitute(adapt ? t.uphold_internal_non_toxic : t.uphold_internal, {{kText, sample.text}, {kReasons, all}});
    }
    case StageType::UpholdExternal: {
      const auto all = render_reasons(reasons);
      return substitute(adapt ? t.uphold_external_non_toxic : t.uphold_external, {{kText, sample.text}, {kReasons, all}});
    }
    case StageType::UpholdSufficiency:
      if (stage.index >= reasons.size()) throw Error(ErrorKind::InvalidInput, "reason index out of range");
      return substitute(t.uphold_suf, {{kText, sample.text}, {kReason, reasons[stage.index]}});
    case StageType::UpholdNecessity: {
      if (reasons.size() < 2) throw Error(ErrorKind::NecRequiresTwoReasons, "leave-one-out needs two reasons");
      if (stage.index >= reasons.size()) throw Error(ErrorKind::InvalidInput, "reason index out of range");
      std::vector<std::string> kept;
      for (std::size_t i = 0; i < reasons.size(); ++i) {
        if (i != stage.index) kept.push_back(reasons[i]);
      }
      const auto rest = render_reasons(kept);
      return substitute(t.uphold_nec, {{kText, sample.text}, {kReasons, rest}});
    }
    case StageType::Justify: break;
  }
  return {};
}

std::int64_t system_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// one sample

SampleOutcome run_sample(const InputSample& sample, const PipelineContext& ctx, SampleStages existing,
                         const std::function<void(const StageRecord&)>& on_stage) {
  SampleOutcome out;
  out.stages = std::move(existing);

  auto generate = [&](StageKind stage, const std::vector<std::string>& reasons, Stance stance) {
    try {
      const auto prompt = build_prompt(ctx.templates, stage, sample, reasons, stance);
      const auto started = ctx.clock();
      auto trace = ctx.backend.complete(prompt, ctx.params);
      if (trace.prompt_fingerprint.empty()) trace.prompt_fingerprint = fingerprint(prompt);
      auto rec = analyze_stage(sample.id, stage, prompt, std::move(trace), ctx.backend.model_id(), ctx.rules,
                               ctx.sim, ctx.mode);
      rec.started_at_ms = started;
      rec.finished_at_ms = ctx.clock();
      ++out.generated;
      if (on_stage) on_stage(rec);
      out.stages.put(std::move(rec));
    } catch (const Error& e) {
      throw StageFailure(e, stage.key());
    }
  };

  if (!out.stages.justify) generate(StageKind::justify(), {}, Stance::Unresolved);
  const auto& J = *out.stages.justify;
  const bool refusal = J.parsed.decision_kind == DecisionKind::Refusal;

  if (!refusal && !J.parsed.reason_spans.empty()) {
    std::vector<std::string> reasons;
    for (std::size_t i = 0; i < J.parsed.reason_spans.size(); ++i) reasons.push_back(J.reason_text(i));
    const auto stance = J.parsed.stance;
    if (!out.stages.internal) generate(StageKind::uphold_internal(), reasons, stance);
    if (!out.stages.external) generate(StageKind::uphold_external(), reasons, stance);
    if (stance == Stance::Toxic) {
      for (std::size_t j = 0; j < reasons.size(); ++j) {
        if (!out.stages.sufficiency.count(j)) generate(StageKind::sufficiency(j), reasons, stance);
      }
    } else if (stance == Stance::NonToxic && reasons.size() >= 2) {
      for (std::size_t j = 0; j < reasons.size(); ++j) {
        if (!out.stages.necessity.count(j)) generate(StageKind::necessity(j), reasons, stance);
      }
    }
  }

  try {
    out.metrics = score_sample(sample, out.stages, ctx.sim, ctx.weights);
  } catch (const Error& e) {
    throw StageFailure(e, "score");
  }
  return out;
}

// ---------------------------------------------------------------------------
// manifest

json RunManifest::to_json() const {
  return {{"tool_version", tool_version},
          {"model_id", model_id},
          {"endpoint", endpoint},
          {"generation", {{"temperature", params.temperature}, {"top_p", params.top_p},
                          {"max_new_tokens", params.max_new_tokens}}},
          {"weights", weights.to_json()},
          {"rules", rules},
          {"templates", templates},
          {"similarity_provider", similarity_provider},
          {"decision_confidence_mode", decision_confidence_mode},
          {"dataset_fingerprint", dataset_fingerprint},
          {"seed", seed},
          {"sampling", sampling},
          {"schema", schema}};
}

RunManifest RunManifest::from_json(const json& doc) {
  RunManifest m;
  try {
    m.tool_version = doc.at("tool_version").get<std::string>();
    m.model_id = doc.at("model_id").get<std::string>();
    m.endpoint = doc.at("endpoint").get<std::string>();
    const auto& g = doc.at("generation");
    m.params.temperature = g.at("temperature").get<double>();
    m.params.top_p = g.at("top_p").get<double>();
    m.params.max_new_tokens = g.at("max_new_tokens").get<int>();
    m.weights = MetricWeights::from_json(doc.at("weights"));
    m.rules = doc.at("rules");
    m.templates = doc.at("templates");
    m.similarity_provider = doc.at("similarity_provider").get<std::string>();
    m.decision_confidence_mode = doc.value("decision_confidence_mode", m.decision_confidence_mode);
    m.dataset_fingerprint = doc.value("dataset_fingerprint", std::string());
    m.seed = doc.value("seed", std::uint64_t{0});
    m.sampling = doc.value("sampling", json::object());
    m.schema = doc.value("schema", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptRecord, std::string("manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// run directory

namespace {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest_for_comparison(json doc) {
  doc.erase("tool_version");
  return doc;
}

constexpr StageType kStageTypes[] = {StageType::Justify, StageType::UpholdInternal, StageType::UpholdExternal,
                                     StageType::UpholdSufficiency, StageType::UpholdNecessity};

}  // namespace

RunStore::RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(stages_dir(), ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + stages_dir().string() + ": " + ec.message());
}

std::filesystem::path RunStore::stage_path(StageType type) const {
  return stages_dir() / (std::string(to_string(type)) + ".jsonl");
}

bool RunStore::has_manifest() const { return std::filesystem::exists(manifest_path()); }

RunManifest RunStore::read_manifest() const {
  if (!has_manifest()) throw Error(ErrorKind::Io, "no manifest in " + dir_.string());
  try {
    return RunManifest::from_json(json::parse(read_file(manifest_path())));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::CorruptRecord, manifest_path().string() + ": " + e.what());
  }
}

void RunStore::ensure_manifest(const RunManifest& manifest) {
  const auto doc = manifest.to_json();
  if (has_manifest()) {
    json stored;
    try {
      stored = json::parse(read_file(manifest_path()));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::CorruptRecord, manifest_path().string() + ": " + e.what());
    }
    if (manifest_for_comparison(stored) != manifest_for_comparison(doc)) {
      throw Error(ErrorKind::ManifestMismatch,
                  "run directory " + dir_.string() + " was created with different settings; use a new --out");
    }
    return;
  }
  write_file_atomic(manifest_path(), doc.dump(2) + "\n");
}

void RunStore::write_samples(const std::vector<InputSample>& samples) {
  std::string content;
  for (const auto& s : samples) content += to_jsonl_line(to_json(s));
  write_file_atomic(samples_path(), content);
}

std::vector<InputSample> RunStore::read_samples() const {
  std::vector<InputSample> out;
  std::size_t line = 0;
  for (const auto& doc : read_jsonl(samples_path())) {
    ++line;
    try {
      out.push_back(input_sample_from_json(doc));
    } catch (const Error& e) {
      throw Error(ErrorKind::CorruptRecord, samples_path().string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

void RunStore::append_line(const std::filesystem::path& path, const std::string& line) {
  std::lock_guard lock(mutex_);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorKind::Io, "cannot append to " + path.string());
  out << line;
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "cannot append to " + path.string());
}

void RunStore::append_stage(const StageRecord& record) {
  append_line(stage_path(record.stage.type), to_jsonl_line(to_json(record)));
}

void RunStore::append_metric(const MetricRecord& record) {
  append_line(metrics_path(), to_jsonl_line(to_json(record)));
}

void RunStore::append_error(const std::string& sample_id, const std::string& stage, const std::string& kind,
                            const std::string& message) {
  append_line(errors_path(),
              to_jsonl_line({{"sample_id", sample_id}, {"stage", stage}, {"kind", kind}, {"message", message}}));
}

std::map<std::string, SampleStages> RunStore::read_stages() const {
  std::map<std::string, SampleStages> out;
  for (auto type : kStageTypes) {
    const auto path = stage_path(type);
    std::size_t line = 0;
    for (const auto& doc : read_jsonl(path, true)) {
      ++line;
      try {
        auto rec = stage_record_from_json(doc);
        if (rec.stage.type != type) throw Error(ErrorKind::CorruptRecord, "record is in the wrong stage file");
        auto id = rec.sample_id;
        out[id].put(std::move(rec));
      } catch (const Error& e) {
        throw Error(ErrorKind::CorruptRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
      }
    }
  }
  return out;
}

std::vector<MetricRecord> RunStore::read_metrics() const {
  std::vector<MetricRecord> out;
  std::size_t line = 0;
  for (const auto& doc : read_jsonl(metrics_path(), true)) {
    ++line;
    try {
      out.push_back(metric_record_from_json(doc));
    } catch (const Error& e) {
      throw Error(ErrorKind::CorruptRecord, metrics_path().string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

void RunStore::write_metrics(const std::vector<MetricRecord>& records) {
  std::string content;
  for (const auto& m : records) content += to_jsonl_line(to_json(m));
  std::lock_guard lock(mutex_);
  write_file_atomic(metrics_path(), content);
}

void RunStore::repair() {
  std::lock_guard lock(mutex_);
  std::vector<std::filesystem::path> files{metrics_path(), errors_path(), similarity_cache_path()};
  for (auto type : kStageTypes) files.push_back(stage_path(type));
  for (const auto& path : files) {
    if (!std::filesystem::exists(path)) continue;
    const auto content = read_file(path);
    if (content.empty() || content.back() == '\n') continue;
    const auto keep = content.rfind('\n');
    write_file_atomic(path, keep == std::string::npos ? std::string() : content.substr(0, keep + 1));
  }
}

void RunStore::canonicalize() {
  std::map<std::string, std::size_t> order;
  {
    std::size_t i = 0;
    for (const auto& doc : read_jsonl(samples_path())) order.emplace(doc.value("id", std::string()), i++);
  }
  auto rank = [&](const json& doc) {
    const auto id = doc.value("sample_id", std::string());
    auto it = order.find(id);
    return std::tuple(it == order.end() ? order.size() : it->second, id, doc.value("index", std::size_t{0}),
                      doc.value("stage", std::string()));
  };
  auto rewrite = [&](const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    auto docs = read_jsonl(path);
    std::stable_sort(docs.begin(), docs.end(), [&](const json& a, const json& b) { return rank(a) < rank(b); });
    std::string content;
    for (const auto& d : docs) content += to_jsonl_line(d);
    write_file_atomic(path, content);
  };
  std::lock_guard lock(mutex_);
  for (auto type : kStageTypes) rewrite(stage_path(type));
  rewrite(metrics_path());
  rewrite(errors_path());
}

// ---------------------------------------------------------------------------
// whole run

RunReport run_dataset(const std::vector<InputSample>& samples, const PipelineContext& ctx, RunStore& store,
                      const RunOptions& options) {
  RunReport report;
  report.samples = samples.size();
  store.repair();
  const auto persisted = store.read_stages();
  std::set<std::string> done;
  for (const auto& m : store.read_metrics()) done.insert(m.sample_id);

  std::vector<const InputSample*> todo;
  for (const auto& s : samples) {
    if (done.count(s.id)) ++report.resumed;
    else todo.push_back(&s);
  }

  std::atomic<std::size_t> next{0}, completed{0}, failed{0}, calls{0};
  std::atomic<bool> stop{false};
  std::mutex fatal_mutex;

  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const auto k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const auto& sample = *todo[k];
      SampleStages existing;
      if (auto it = persisted.find(sample.id); it != persisted.end()) existing = it->second;
      std::string stage = "sample";
      try {
        auto outcome = run_sample(sample, ctx, std::move(existing), [&](const StageRecord& r) {
          ++calls;
          store.append_stage(r);
        });
        store.append_metric(outcome.metrics);
        ++completed;
        continue;
      } catch (const StageFailure& e) {
        stage = e.stage();
        store.append_error(sample.id, stage, std::string(to_string(e.kind())), e.what());
        if (e.kind() == ErrorKind::MissingLogprobs) {
          std::lock_guard lock(fatal_mutex);
          if (!report.fatal) report.fatal = e.what();
          stop = true;
          return;
        }
        log(sample.id + " [" + stage + "]: " + e.what());
      } catch (const Error& e) {
        store.append_error(sample.id, stage, std::string(to_string(e.kind())), e.what());
        log(sample.id + ": " + e.what());
      } catch (const std::exception& e) {
        store.append_error(sample.id, stage, "Internal", e.what());
        log(sample.id + ": " + e.what());
      }
      ++failed;
    }
  };

  const auto threads = std::max<std::size_t>(1, std::min(options.concurrency, todo.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  store.canonicalize();
  report.completed = report.resumed + completed.load();
  report.failed = failed.load();
  report.backend_calls = calls.load();
  return report;
}

}  // namespace haf
