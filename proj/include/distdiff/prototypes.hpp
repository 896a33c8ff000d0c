#pragma once

#include <map>
#include <utility>

#include <json.hpp>

#include "distdiff/features.hpp"

namespace distdiff {

struct ClassPrototypes {
    Tensor p_c;                            // class-level prototype
    std::vector<Tensor> p_g;               // group-level prototypes
    std::vector<std::size_t> group_sizes;  // members per group, partition of the class
};

struct PrototypeSet {
    std::size_t K = 0;
    std::size_t feature_dim = 0;
    std::string extractor_fingerprint;
    std::map<int, ClassPrototypes> classes;

    const ClassPrototypes& for_class(int c) const;

    nlohmann::json to_json() const;
    static PrototypeSet from_json(const nlohmann::json& j);
};

// Per class: p_c is the mean feature, groups come from average-linkage
// agglomerative clustering, p_g are group means. Classes smaller than K fall
// back to K' = class size with a warning.
PrototypeSet build_prototypes(const Dataset& data, const FeatureExtractor& extractor, int K);

// Euclidean distance to the class prototype.
double dist_class(const Tensor& feature, const Tensor& p_c);

// Group selection by maximal cosine similarity (ties to the smallest index),
// then Euclidean distance to the selected prototype.
std::pair<double, std::size_t> dist_group(const Tensor& feature, const std::vector<Tensor>& p_g);

}  // namespace distdiff
