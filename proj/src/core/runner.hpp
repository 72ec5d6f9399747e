#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "core/run_config.hpp"

namespace medeval::runner {

// High-level operations behind the C API and CLI. Each validates its
// config, runs the pipeline, writes artifacts under the run's output
// directory (exactly one fingerprint.json per run) and returns a summary.

nlohmann::json index_build(const std::string& corpus_path,
                           const std::string& out_path,
                           const std::string& options_json);

nlohmann::json eval_run(const RunConfig& cfg);

nlohmann::json ablate_run(const RunConfig& base, const std::string& plan_json_text);

nlohmann::json bins_run(const std::string& report_path, const std::string& by,
                        int bin_width, const std::string& out_csv);

nlohmann::json optimize_run(const RunConfig& cfg);

nlohmann::json report_merge(const std::vector<std::string>& report_paths,
                            const std::string& out_csv);

}  // namespace medeval::runner
