#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "haf/config.hpp"

namespace haf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

/// Ingest, run every stage, score, and write the run directory plus
/// summary files. 0 on success, 1 on a fatal error, 2 when some samples
/// failed.
int cmd_run(const Config& config, const std::filesystem::path& dataset, const std::filesystem::path& out_dir,
            std::ostream& out, std::ostream& err);

/// Recompute metrics.jsonl from the persisted traces. Similarity scores come
/// from the run's cache only; a missing entry is an error, never a request.
int cmd_score(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& weights_file,
              std::ostream& out, std::ostream& err);

/// Write summary.<format> for format json, csv or md.
int cmd_report(const std::filesystem::path& run_dir, const std::string& format, std::ostream& out,
               std::ostream& err);

/// Mean absolute difference between the config's two compare providers over
/// the run's input-reason and reason-reason pairs, per dataset. Writes
/// similarity_comparison.json.
int cmd_compare_sim(const Config& config, const std::filesystem::path& run_dir, std::ostream& out,
                    std::ostream& err);

}  // namespace haf
