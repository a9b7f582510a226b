#pragma once

#include "fincurate/config.hpp"
#include "fincurate/errors.hpp"

#include <map>
#include <string>
#include <vector>

namespace fincurate::pipeline {

struct StageReport {
    std::string stage;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t dropped = 0;
    std::map<std::string, std::size_t> reasons;
    std::map<std::string, double> metrics; // stage-specific numbers (kl_avg, f1, ...)
    double wall_ms = 0.0;

    std::string to_json() const;
    static StageReport from_json(const std::string & text);
};

// Known stage names, in canonical pipeline order.
const std::vector<std::string> & stage_names();

// Execute one stage against the config. `arg` carries the per-invocation
// input where one is needed (validate-recipe: recipe path). Reports are
// appended to <output_dir>/reports.jsonl; artifacts land under
// <output_dir>/<stage>/. Throws config_error / data_error / client_error.
StageReport run_stage(const std::string & stage, const config::PipelineConfig & cfg, const std::string & arg = "");

std::vector<StageReport> load_reports(const std::filesystem::path & reports_file);

// Human-readable stage summary plus the generated -> structurally valid ->
// semantically valid attrition funnel when those stages are present.
std::string render_report(const std::vector<StageReport> & reports);

} // namespace fincurate::pipeline
