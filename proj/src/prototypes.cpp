#include "distdiff/prototypes.hpp"

#include <cmath>

#include "distdiff/cluster.hpp"
#include "distdiff/errors.hpp"
#include "distdiff/kernels.hpp"
#include "distdiff/log.hpp"

namespace distdiff {

const ClassPrototypes& PrototypeSet::for_class(int c) const {
    auto it = classes.find(c);
    if (it == classes.end()) throw DataError("prototypes: no class " + std::to_string(c));
    return it->second;
}

nlohmann::json PrototypeSet::to_json() const {
    nlohmann::json j;
    j["K"] = K;
    j["feature_dim"] = feature_dim;
    j["extractor_fingerprint"] = extractor_fingerprint;
    nlohmann::json jc = nlohmann::json::object();
    for (const auto& [c, p] : classes) {
        nlohmann::json e;
        e["p_c"] = p.p_c.data;
        auto groups = nlohmann::json::array();
        for (const Tensor& g : p.p_g) groups.push_back(g.data);
        e["p_g"] = std::move(groups);
        e["group_sizes"] = p.group_sizes;
        jc[std::to_string(c)] = std::move(e);
    }
    j["classes"] = std::move(jc);
    return j;
}

PrototypeSet PrototypeSet::from_json(const nlohmann::json& j) {
    PrototypeSet s;
    try {
        s.K = j.at("K").get<std::size_t>();
        s.feature_dim = j.at("feature_dim").get<std::size_t>();
        s.extractor_fingerprint = j.at("extractor_fingerprint").get<std::string>();
        for (const auto& [key, e] : j.at("classes").items()) {
            ClassPrototypes p;
            p.p_c = Tensor::vector(e.at("p_c").get<std::vector<double>>());
            for (const auto& g : e.at("p_g"))
                p.p_g.push_back(Tensor::vector(g.get<std::vector<double>>()));
            p.group_sizes = e.at("group_sizes").get<std::vector<std::size_t>>();
            s.classes[std::stoi(key)] = std::move(p);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("prototypes json: ") + e.what());
    }
    for (const auto& [c, p] : s.classes) {
        if (p.p_c.numel() != s.feature_dim)
            throw DataError("prototypes json: p_c dimension mismatch for class " + std::to_string(c));
        for (const Tensor& g : p.p_g)
            if (g.numel() != s.feature_dim)
                throw DataError("prototypes json: p_g dimension mismatch for class " + std::to_string(c));
    }
    return s;
}

PrototypeSet build_prototypes(const Dataset& data, const FeatureExtractor& extractor, int K) {
    if (K < 1) throw ConfigError("build_prototypes: K must be >= 1");
    if (data.size() == 0) throw DataError("build_prototypes: empty dataset");
    PrototypeSet set;
    set.K = static_cast<std::size_t>(K);
    set.feature_dim = extractor.feature_dim;
    set.extractor_fingerprint = extractor.fingerprint();

    int nc = data.num_classes();
    for (int c = 0; c < nc; ++c) {
        auto idx = data.class_indices(c);
        if (idx.empty()) continue;
        Tensor feats = extractor.features(data.features_of_class(c));
        std::size_t n = feats.rows(), fd = feats.cols();

        ClassPrototypes p;
        p.p_c = Tensor::zeros({fd});
        for (std::size_t i = 0; i < n; ++i)
            kernels::add(p.p_c.data.data(), feats.data.data() + i * fd, p.p_c.data.data(), fd);
        kernels::scale(1.0 / static_cast<double>(n), p.p_c.data.data(), p.p_c.data.data(), fd);

        int k_eff = K;
        if (n < static_cast<std::size_t>(K)) {
            k_eff = static_cast<int>(n);
            warn("build_prototypes: class " + std::to_string(c) + " has " + std::to_string(n) +
                 " samples < K=" + std::to_string(K) + "; using K'=" + std::to_string(k_eff));
        }
        std::vector<int> assignment = agglomerative_cluster(feats, k_eff);
        p.p_g.assign(k_eff, Tensor::zeros({fd}));
        p.group_sizes.assign(k_eff, 0);
        for (std::size_t i = 0; i < n; ++i) {
            int g = assignment[i];
            kernels::add(p.p_g[g].data.data(), feats.data.data() + i * fd, p.p_g[g].data.data(), fd);
            ++p.group_sizes[g];
        }
        for (int g = 0; g < k_eff; ++g) {
            if (p.group_sizes[g] == 0) throw NumericalError("build_prototypes: empty group");
            kernels::scale(1.0 / static_cast<double>(p.group_sizes[g]), p.p_g[g].data.data(),
                           p.p_g[g].data.data(), fd);
        }
        set.classes[c] = std::move(p);
    }
    return set;
}

double dist_class(const Tensor& feature, const Tensor& p_c) {
    if (!feature.same_shape(p_c))
        throw ContractError("dist_class: dimension mismatch " + shape_str(feature.shape) + " vs " +
                            shape_str(p_c.shape));
    return std::sqrt(kernels::sqdist(feature.data.data(), p_c.data.data(), feature.numel()));
}

std::pair<double, std::size_t> dist_group(const Tensor& feature, const std::vector<Tensor>& p_g) {
    if (p_g.empty()) throw ContractError("dist_group: no prototypes");
    double fnorm = std::sqrt(kernels::dot(feature.data.data(), feature.data.data(), feature.numel()));
    if (fnorm == 0.0) throw NumericalError("dist_group: zero-norm feature, cosine undefined");
    std::size_t best = 0;
    double best_cos = 0.0;
    for (std::size_t j = 0; j < p_g.size(); ++j) {
        const Tensor& g = p_g[j];
        if (!feature.same_shape(g)) throw ContractError("dist_group: dimension mismatch");
        double gnorm = std::sqrt(kernels::dot(g.data.data(), g.data.data(), g.numel()));
        if (gnorm == 0.0) throw NumericalError("dist_group: zero-norm prototype, cosine undefined");
        double cos = kernels::dot(feature.data.data(), g.data.data(), feature.numel()) / (fnorm * gnorm);
        if (j == 0 || cos > best_cos) {
            best_cos = cos;
            best = j;
        }
    }
    double dist = std::sqrt(kernels::sqdist(feature.data.data(), p_g[best].data.data(), feature.numel()));
    return {dist, best};
}

}  // namespace distdiff
