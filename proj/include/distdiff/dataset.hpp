#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "distdiff/rng.hpp"
#include "distdiff/tensor.hpp"

namespace distdiff {

enum class Provenance { original, synthetic, merged };

const char* provenance_name(Provenance p);

struct Sample {
    std::vector<double> x;
    int y = 0;
    // Index of the seed sample for synthetic points, -1 otherwise.
    long long source = -1;
};

struct Dataset {
    std::size_t d = 0;
    std::vector<Sample> samples;
    std::vector<std::string> class_names;
    Provenance provenance = Provenance::original;

    std::size_t size() const { return samples.size(); }
    int num_classes() const;
    Tensor features() const;  // (n, d)
    Tensor features_of_class(int c) const;
    std::vector<int> labels() const;
    std::vector<std::size_t> class_indices(int c) const;
};

// CSV with header "label,x0,...,x{d-1}", 17 significant digits, plus a
// companion <path minus .csv>.meta.json document.
void write_dataset(const Dataset& data, const std::string& csv_path,
                   const nlohmann::json& extra_meta = nlohmann::json::object());
Dataset read_dataset(const std::string& csv_path);
std::string meta_path_for(const std::string& csv_path);

// Gaussian-mixture generators; everything the test-suite runs on is built
// from these.
struct BlobsSpec {
    int classes = 3;
    int clusters_per_class = 1;
    int per_class = 100;
    std::size_t dim = 2;
    double class_radius = 4.0;
    double cluster_radius = 1.5;
    double noise_sd = 0.5;
};
Dataset make_blobs(const BlobsSpec& spec, std::uint64_t seed);

// Distribution-shift variant: the diffusion trainset covers every cluster of
// each class while the target keeps only a narrow sub-mixture. Test samples
// follow the target manifold.
struct ShiftSpec {
    int classes = 2;
    int broad_clusters = 3;
    int target_clusters = 1;
    int broad_per_class = 300;
    int target_per_class = 250;
    int test_per_class = 150;
    std::size_t dim = 2;
    double class_radius = 8.0;
    double cluster_radius = 2.5;
    double noise_sd = 0.45;
};
struct ShiftScenario {
    Dataset broad;
    Dataset target;
    Dataset test;
};
ShiftScenario make_shift(const ShiftSpec& spec, std::uint64_t seed);

Dataset merge_datasets(const Dataset& original, const Dataset& synthetic);

}  // namespace distdiff
