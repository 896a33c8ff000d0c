#pragma once

#include <optional>

#include <json.hpp>

#include "distdiff/features.hpp"
#include "distdiff/prototypes.hpp"

namespace distdiff {

// Squared-mean-difference plus covariance trace term between Gaussian fits.
// Population parameters can be supplied directly.
double frechet_gaussian(const Tensor& mu_a, const Tensor& cov_a, const Tensor& mu_b,
                        const Tensor& cov_b);
// Gaussian fit of two sample sets (n, d); a 1e-6 ridge is added when a set is
// too small for a full-rank covariance.
double frechet_distance(const Tensor& a, const Tensor& b);

// Biased V-statistic estimate of squared MMD with an RBF kernel.
// bandwidth <= 0 selects the median pairwise distance over the pooled sets.
double mmd2(const Tensor& a, const Tensor& b, double bandwidth = 0.0);

struct DownstreamConfig {
    int epochs = 150;
    int batch = 32;
    double lr = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> hidden = {64, 64};
};

struct DownstreamResult {
    double mean = 0.0;
    double sd = 0.0;
    std::vector<double> per_seed;
};

// Fresh classifier per seed trained on `train`, accuracy on `test`.
DownstreamResult downstream_eval(const Dataset& train, const Dataset& test,
                                 const DownstreamConfig& cfg, const std::vector<std::uint64_t>& seeds);

struct AlignmentOptions {
    bool feature_space = true;  // false: raw data space
    int max_samples = 3000;     // per set, subsampled deterministically
    double mmd_bandwidth = 0.0; // <= 0: median heuristic
    std::uint64_t seed = 0;
};

struct MetricReport {
    double frechet = 0.0;
    double mmd2 = 0.0;
    std::string space;
    std::size_t n_real = 0;
    std::size_t n_synth = 0;
    std::uint64_t seed = 0;
    // Mean prototype distances over the synthetic set; present when a
    // prototype set was available.
    std::optional<double> mean_dc;
    std::optional<double> mean_dg;
    std::optional<DownstreamResult> acc_original;
    std::optional<DownstreamResult> acc_expanded;
    std::optional<double> delta;

    nlohmann::json to_json() const;
};

// Alignment metrics of a synthetic set against the real set it should match.
MetricReport alignment_report(const Dataset& real, const Dataset& synth,
                              const FeatureExtractor* extractor, const PrototypeSet* prototypes,
                              const AlignmentOptions& opts);

}  // namespace distdiff
