#pragma once

#include <json.hpp>

#include "distdiff/dataset.hpp"
#include "distdiff/mlp.hpp"

namespace distdiff {

// Classifier whose penultimate activations serve as the feature map for
// prototype construction and energy guidance.
struct FeatureExtractor {
    Mlp net;
    std::size_t feature_depth = 0;  // layers applied to produce features
    std::size_t feature_dim = 0;

    Tensor features(const Tensor& x) const { return net.forward_upto(x, feature_depth); }
    Var features(Tape& tape, Var x) const { return net.forward_upto(tape, x, feature_depth); }
    Tensor logits(const Tensor& x) const { return net.forward(x); }

    std::string fingerprint() const { return net.fingerprint(); }
    nlohmann::json to_json() const;
    static FeatureExtractor from_json(const nlohmann::json& j);
};

struct ExtractorTrainConfig {
    int epochs = 200;
    int batch = 64;
    double lr = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> hidden = {64, 64};
};

struct ExtractorTrainResult {
    FeatureExtractor extractor;
    double train_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

ExtractorTrainResult train_extractor(const Dataset& data, const ExtractorTrainConfig& cfg,
                                     std::uint64_t seed);

// Accuracy of argmax(logits) against labels.
double classify_accuracy(const Mlp& net, const Dataset& data);

}  // namespace distdiff
