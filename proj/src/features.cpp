#include "distdiff/features.hpp"

#include <algorithm>
#include <numeric>

#include "distdiff/errors.hpp"

namespace distdiff {

nlohmann::json FeatureExtractor::to_json() const {
    nlohmann::json j;
    j["feature_depth"] = feature_depth;
    j["feature_dim"] = feature_dim;
    j["weights"] = net.to_json();
    return j;
}

FeatureExtractor FeatureExtractor::from_json(const nlohmann::json& j) {
    FeatureExtractor f;
    try {
        f.feature_depth = j.at("feature_depth").get<std::size_t>();
        f.feature_dim = j.at("feature_dim").get<std::size_t>();
        f.net = Mlp::from_json(j.at("weights"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("extractor json: ") + e.what());
    }
    if (f.feature_depth >= f.net.layers.size())
        throw DataError("extractor json: feature_depth must leave a classification head");
    if (f.net.layers[f.feature_depth - 1].w.cols() != f.feature_dim)
        throw DataError("extractor json: feature_dim inconsistent with layer widths");
    return f;
}

double classify_accuracy(const Mlp& net, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    Tensor logits = net.forward(data.features());
    std::size_t correct = 0;
    std::size_t c = logits.cols();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double* row = logits.data.data() + i * c;
        std::size_t arg = std::max_element(row, row + c) - row;
        if (static_cast<int>(arg) == data.samples[i].y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

ExtractorTrainResult train_extractor(const Dataset& data, const ExtractorTrainConfig& cfg,
                                     std::uint64_t seed) {
    if (data.size() == 0) throw DataError("train_extractor: empty dataset");
    int num_classes = data.num_classes();
    if (num_classes < 2) throw DataError("train_extractor: need at least 2 classes");
    if (cfg.hidden.empty()) throw ConfigError("train_extractor: need at least one hidden layer");

    FeatureExtractor ex;
    Rng init_rng(derive_seed(seed, {0x6578696e6974ULL}));
    ex.net = Mlp::create(data.d, cfg.hidden, num_classes, init_rng);
    ex.feature_depth = cfg.hidden.size();
    ex.feature_dim = cfg.hidden.back();

    SgdOptimizer opt(cfg.lr, cfg.momentum);
    auto params = ex.net.parameters();
    Rng order_rng(derive_seed(seed, {0x65786f72646572ULL}));

    std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    ExtractorTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = order_rng.index(i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            std::size_t bs = std::min<std::size_t>(cfg.batch, n - start);
            Tensor input = Tensor::zeros({bs, data.d});
            std::vector<int> labels(bs);
            for (std::size_t b = 0; b < bs; ++b) {
                const Sample& s = data.samples[order[start + b]];
                std::copy(s.x.begin(), s.x.end(), input.data.begin() + b * data.d);
                labels[b] = s.y;
            }
            Tape tape;
            Var x = tape.constant(std::move(input));
            std::vector<Var> param_vars;
            Var logits = ex.net.forward_train(tape, x, param_vars);
            Var loss = tape.softmax_cross_entropy(logits, labels);
            double loss_val = tape.value(loss).scalar_value();
            if (!std::isfinite(loss_val))
                throw NumericalError("train_extractor: non-finite loss at epoch " +
                                     std::to_string(epoch));
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(param_vars.size());
            for (Var p : param_vars) grads.push_back(tape.grad(p));
            opt.step(params, grads);
            epoch_loss += loss_val * static_cast<double>(bs);
            seen += bs;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }
    result.train_accuracy = classify_accuracy(ex.net, data);
    result.extractor = std::move(ex);
    return result;
}

}  // namespace distdiff
