#pragma once

#include "distdiff/config.hpp"
#include "distdiff/expansion.hpp"
#include "distdiff/metrics.hpp"

namespace distdiff {

struct AblationCell {
    std::string name;
    nlohmann::json overrides;  // deep-merged onto the base config snapshot
};

struct AblationGrid {
    std::string name;
    std::vector<AblationCell> cells;
};

// prototype | m | k | steps | rho | lambda-g | mode
AblationGrid builtin_grid(const std::string& name);
AblationGrid grid_from_json(const nlohmann::json& j);

struct AblationInputs {
    const Dataset& original;
    const Dataset* test = nullptr;  // enables the downstream columns
    const Denoiser& denoiser;
    const FeatureExtractor& extractor;
};

struct AblationCellResult {
    std::string cell;
    nlohmann::json config_snapshot;
    MetricReport report;
};

struct AblationRunResult {
    std::string grid_name;
    std::vector<AblationCellResult> cells;
    nlohmann::json direction_flags;  // informational trend checks
};

// Every cell shares the base seed so configurations are compared on paired
// noise draws. Cells run in parallel; expansion inside a cell is then
// single-threaded.
AblationRunResult run_ablation(const AblationGrid& grid, const AblationInputs& inputs,
                               const RunConfig& base, unsigned threads);

// Flat summary, one row per cell, fixed column order (documented in README).
std::string ablation_csv(const AblationRunResult& result);
nlohmann::json ablation_json(const AblationRunResult& result);

}  // namespace distdiff
