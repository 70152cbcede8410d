#include "haf/commands.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "haf/error.hpp"
#include "haf/records.hpp"
#include "haf/reporting.hpp"
#include "haf/scoring.hpp"
#include "haf/version.hpp"

namespace haf {

using nlohmann::json;

namespace {

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out.flush()) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

void write_summaries(const std::filesystem::path& dir, const std::vector<MetricRecord>& metrics) {
  const auto summary = aggregate(metrics);
  for (const char* format : {"json", "csv", "md"}) {
    write_text(dir / (std::string("summary.") + format), export_summary(summary, format));
  }
}

/// Keys in `patch` replace those of `base`; giving one side of a weight
/// pair lets the other follow.
MetricWeights patched_weights(const MetricWeights& base, const json& patch) {
  json doc = base.to_json();
  for (auto [c, g] : {std::pair{"w_c_justify", "w_g_justify"}, std::pair{"w_c_uphold", "w_g_uphold"}}) {
    if (patch.contains(c) != patch.contains(g)) {
      doc.erase(c);
      doc.erase(g);
    }
  }
  doc.merge_patch(patch);
  return MetricWeights::from_json(doc);
}

}  // namespace

int cmd_run(const Config& config, const std::filesystem::path& dataset, const std::filesystem::path& out_dir,
            std::ostream& out, std::ostream& err) {
  try {
    const auto loaded = load_dataset(dataset, config.schema);
    for (const auto& d : loaded.diagnostics) err << "skipped " << d << "\n";
    const auto drawn = filter_and_sample(loaded.samples, config.sampling);
    out << "dataset: " << loaded.samples.size() << " rows loaded, " << loaded.malformed_rows << " malformed, "
        << drawn.eligible << " eligible, " << drawn.samples.size() << " drawn (mild " << drawn.mild << ", high "
        << drawn.high << ")\n";

    const auto rules = config.rules();
    auto backend = make_backend(config.backend);
    auto inner = make_similarity(config.similarity);

    RunStore store(out_dir);
    RunManifest manifest;
    manifest.tool_version = kVersion;
    manifest.model_id = backend->model_id();
    manifest.endpoint = backend->endpoint();
    manifest.params = config.generation;
    manifest.weights = config.weights;
    manifest.rules = rules.to_json();
    manifest.templates = config.templates.to_json();
    manifest.similarity_provider = inner->provider_id();
    manifest.decision_confidence_mode = to_string(config.decision_confidence);
    manifest.dataset_fingerprint = fingerprint(file_bytes(dataset));
    manifest.seed = config.sampling.rng_seed;
    manifest.sampling = config.sampling.to_json();
    manifest.schema = config.schema.to_json();
    store.ensure_manifest(manifest);
    if (!std::filesystem::exists(store.samples_path())) store.write_samples(drawn.samples);

    store.repair();
    CachedProvider sim(inner, store.similarity_cache_path().string(), inner->provider_id());
    PipelineContext ctx{*backend, sim, rules, config.templates, config.weights, config.generation,
                        config.decision_confidence};
    if (config.fixed_timestamps) ctx.clock = [] { return std::int64_t{0}; };

    RunOptions options;
    options.concurrency = config.concurrency;
    options.log = [&](const std::string& msg) { err << msg << "\n"; };
    const auto report = run_dataset(drawn.samples, ctx, store, options);
    sim.write_canonical();

    out << "run: " << report.completed << "/" << report.samples << " samples scored (" << report.resumed
        << " resumed), " << report.failed << " failed, " << report.backend_calls << " generations\n";
    const auto metrics = store.read_metrics();
    if (!metrics.empty()) write_summaries(store.dir(), metrics);

    if (report.fatal) {
      err << "fatal: " << *report.fatal << "\n";
      return kExitFatal;
    }
    return report.failed > 0 ? kExitPartial : kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}

int cmd_score(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& weights_file,
              std::ostream& out, std::ostream& err) {
  try {
    if (!std::filesystem::is_directory(run_dir / "stages")) {
      err << "error: " << run_dir.string() << " has no stages/ directory\n";
      return kExitFatal;
    }
    RunStore store(run_dir);
    const auto manifest = store.read_manifest();
    auto weights = manifest.weights;
    if (weights_file) {
      json patch;
      try {
        patch = json::parse(file_bytes(*weights_file));
      } catch (const json::parse_error& e) {
        throw Error(ErrorKind::InvalidWeights, weights_file->string() + ": " + e.what());
      }
      weights = patched_weights(weights, patch);
    }
    const auto rules = ClassifierRules::from_json(manifest.rules);
    const auto mode = decision_confidence_mode_from_string(manifest.decision_confidence_mode);
    CachedProvider sim(nullptr, store.similarity_cache_path().string(), manifest.similarity_provider);

    const auto samples = store.read_samples();
    const auto stages = store.read_stages();
    std::set<std::string> scored;
    const bool had_metrics = std::filesystem::exists(store.metrics_path());
    if (had_metrics) {
      for (const auto& m : store.read_metrics()) scored.insert(m.sample_id);
    }

    std::vector<MetricRecord> metrics;
    for (const auto& sample : samples) {
      auto it = stages.find(sample.id);
      if (it == stages.end() || !it->second.justify) continue;
      if (had_metrics && !scored.count(sample.id)) continue;
      SampleStages fresh;
      auto redo = [&](const StageRecord& r) {
        auto rec = analyze_stage(r.sample_id, r.stage, r.prompt_text, r.trace, r.model_id, rules, sim, mode);
        rec.started_at_ms = r.started_at_ms;
        rec.finished_at_ms = r.finished_at_ms;
        fresh.put(std::move(rec));
      };
      const auto& s = it->second;
      redo(*s.justify);
      if (s.internal) redo(*s.internal);
      if (s.external) redo(*s.external);
      for (const auto& [i, r] : s.sufficiency) redo(r);
      for (const auto& [i, r] : s.necessity) redo(r);
      metrics.push_back(score_sample(sample, fresh, sim, weights));
    }
    store.write_metrics(metrics);
    out << "scored " << metrics.size() << " samples offline\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}

int cmd_report(const std::filesystem::path& run_dir, const std::string& format, std::ostream& out,
               std::ostream& err) {
  try {
    if (format != "json" && format != "csv" && format != "md") {
      throw Error(ErrorKind::UnknownFormat, "unknown report format '" + format + "' (expected json, csv or md)");
    }
    const auto path = run_dir / "metrics.jsonl";
    if (!std::filesystem::exists(path)) {
      err << "error: " << path.string() << " not found; run `haf score` first\n";
      return kExitFatal;
    }
    RunStore store(run_dir);
    const auto metrics = store.read_metrics();
    const auto summary = aggregate(metrics);
    const auto target = run_dir / ("summary." + format);
    write_text(target, export_summary(summary, format));
    out << "wrote " << target.string() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}

int cmd_compare_sim(const Config& config, const std::filesystem::path& run_dir, std::ostream& out,
                    std::ostream& err) {
  try {
    if (!config.compare_a || !config.compare_b) {
      throw Error(ErrorKind::ConfigError, "compare-sim needs \"compare\": {\"a\": ..., \"b\": ...} in the config");
    }
    if (!std::filesystem::exists(run_dir / "samples.jsonl")) {
      err << "error: " << run_dir.string() << " is not a run directory\n";
      return kExitFatal;
    }
    RunStore store(run_dir);
    const auto samples = store.read_samples();
    const auto stages = store.read_stages();

    std::map<std::string, LabeledPairs> input_pairs, reason_pairs;
    for (const auto& sample : samples) {
      auto it = stages.find(sample.id);
      if (it == stages.end() || !it->second.justify) continue;
      const auto& J = *it->second.justify;
      const auto n = J.parsed.reason_spans.size();
      auto& ip = input_pairs[sample.source];
      auto& rp = reason_pairs[sample.source];
      ip.label = sample.source + "/input-reason";
      rp.label = sample.source + "/reason-reason";
      for (std::size_t i = 0; i < n; ++i) {
        ip.pairs.emplace_back(J.reason_text(i), sample.text);
        for (std::size_t j = i + 1; j < n; ++j) rp.pairs.emplace_back(J.reason_text(i), J.reason_text(j));
      }
    }
    std::vector<LabeledPairs> sets;
    for (auto* group : {&input_pairs, &reason_pairs}) {
      for (auto& [source, set] : *group) {
        if (!set.pairs.empty()) sets.push_back(std::move(set));
      }
    }
    if (sets.empty()) {
      err << "error: " << run_dir.string() << " has no justify reasons to compare on\n";
      return kExitFatal;
    }
    auto a = make_similarity(*config.compare_a);
    auto b = make_similarity(*config.compare_b);
    const auto diffs = compare_providers(*a, *b, sets);

    json doc{{"provider_a", a->provider_id()}, {"provider_b", b->provider_id()}, {"sets", json::array()}};
    for (const auto& d : diffs) {
      doc["sets"].push_back({{"label", d.label}, {"pairs", d.pairs}, {"mean_abs_difference", d.mean_abs_difference}});
      out << d.label << ": " << d.mean_abs_difference << " over " << d.pairs << " pairs\n";
    }
    write_text(run_dir / "similarity_comparison.json", doc.dump(2) + "\n");
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}

}  // namespace haf
