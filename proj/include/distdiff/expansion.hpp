#pragma once

#include <json.hpp>

#include "distdiff/guidance.hpp"

namespace distdiff {

enum class SamplerKind { ddim, ancestral };
const char* sampler_name(SamplerKind s);
SamplerKind sampler_from_name(const std::string& name);

struct ExpansionConfig {
    double strength = 0.5;      // fraction of the schedule applied to the seed
    double cfg_scale = 7.5;
    double eta = 0.0;
    SamplerKind sampler = SamplerKind::ddim;
    GuidanceConfig guidance;
    unsigned threads = 1;
};

struct PipelineModels {
    Denoiser denoiser;
    FeatureExtractor extractor;
    PrototypeSet prototypes;
    NoiseSchedule sched;
    DdimGrid grid;

    static PipelineModels assemble(Denoiser den, FeatureExtractor ex, PrototypeSet protos,
                                   int ddim_steps);
};

struct GuidedStepRecord {
    int step = 0;  // remaining-step index at which guidance fired
    double energy_before = 0.0;
    double energy_after = 0.0;
    double clipped_fraction = 0.0;
    bool ok = true;
};

struct SampleTelemetry {
    long long sample_id = -1;
    std::vector<GuidedStepRecord> guided_steps;
    bool fallback_unguided = false;
};

// One seed sample through partial noising and guided reverse sampling.
std::vector<double> expand_sample(const std::vector<double>& x, int y, const PipelineModels& models,
                                  const GuidanceContext& ctx, const ExpansionConfig& cfg, Rng& rng,
                                  SampleTelemetry* telemetry = nullptr);

struct ExpansionResult {
    Dataset synthetic;
    std::vector<SampleTelemetry> telemetry;
};

// N replicas per original sample; replica (i, r) draws from an rng stream
// seeded by (seed, i, r), so any thread count produces identical output.
ExpansionResult expand_dataset(const Dataset& original, int factor, const PipelineModels& models,
                               const ExpansionConfig& cfg, std::uint64_t seed);

nlohmann::json telemetry_to_json(const std::vector<SampleTelemetry>& telemetry);

}  // namespace distdiff
