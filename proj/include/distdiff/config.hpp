#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "distdiff/guidance.hpp"

namespace distdiff {

// One JSON document with typed sections. Unknown keys are rejected; flags
// override config keys; config overrides the built-in defaults. The
// serialized snapshot is embedded in every artifact.
struct RunConfig {
    std::uint64_t seed = 0;

    struct Data {
        std::string generator = "blobs";  // blobs | shift
        int classes = 3;
        int clusters_per_class = 1;
        int per_class = 100;
        std::size_t dim = 2;
        double class_radius = 4.0;
        double cluster_radius = 1.5;
        double noise_sd = 0.5;
        // shift variant
        int broad_clusters = 3;
        int target_clusters = 1;
        int broad_per_class = 300;
        int target_per_class = 250;
        int test_per_class = 150;
    } data;

    struct Diffusion {
        int T = 1000;
        double beta_start = 1e-4;
        double beta_end = 0.02;
        int ddim_steps = 50;
        double eta = 0.0;
        int epochs = 150;
        int batch = 64;
        double lr = 0.02;
        double momentum = 0.9;
        double cfg_dropout = 0.1;
        std::vector<std::size_t> hidden = {64, 64};
        int time_embed_dim = 8;
    } diffusion;

    struct Extractor {
        int epochs = 200;
        int batch = 64;
        double lr = 0.05;
        double momentum = 0.9;
        std::vector<std::size_t> hidden = {64, 64};
    } extractor;

    struct Prototypes {
        int K = 3;
    } prototypes;

    struct Guidance {
        std::string mode = "transform";  // off | transform | direct-latent
        double rho = 10.0;
        int M = 20;
        int steps = 1;
        int inner_iters = 1;
        double lambda_g = 1.0;
        bool use_pc = true;
        bool use_pg = true;
        double epsilon = 0.2;
        bool persist_params = false;
    } guidance;

    struct Expansion {
        int factor = 5;
        double strength = 0.5;
        double cfg_scale = 7.5;
        std::string sampler = "ddim";  // ddim | ancestral
        unsigned threads = 1;
    } expansion;

    struct Evaluation {
        int fid_samples = 3000;
        std::string space = "feature";  // feature | raw
        double mmd_bandwidth = 0.0;     // <= 0: median
        int downstream_seeds = 3;
        int downstream_epochs = 150;
        int downstream_batch = 32;
        double downstream_lr = 0.05;
        double downstream_momentum = 0.9;
        std::vector<std::size_t> downstream_hidden = {64, 64};
    } evaluation;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load_file(const std::string& path);

    // Derived bundles.
    GuidanceConfig guidance_config() const;

    std::string fingerprint() const;
};

// Deep-merge overrides onto a snapshot and re-validate.
nlohmann::json merge_config_json(nlohmann::json base, const nlohmann::json& overrides);

}  // namespace distdiff
