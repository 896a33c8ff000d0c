#include "distdiff/config.hpp"

#include <fstream>

#include "distdiff/expansion.hpp"
#include "distdiff/mlp.hpp"

namespace distdiff {

namespace {

// Reads known keys from a section object and rejects anything else.
class SectionReader {
public:
    SectionReader(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
        for (const auto& [key, _] : j.items()) pending_.push_back(key);
    }

    template <typename T>
    void get(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config: bad type for " + name_ + "." + key);
        }
        pending_.erase(std::remove(pending_.begin(), pending_.end(), key), pending_.end());
    }

    void finish() const {
        if (!pending_.empty())
            throw ConfigError("config: unknown key '" + name_ + "." + pending_.front() + "'");
    }

private:
    const nlohmann::json& j_;
    std::string name_;
    std::vector<std::string> pending_;
};

}  // namespace

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["data"] = {{"generator", data.generator},
                 {"classes", data.classes},
                 {"clusters_per_class", data.clusters_per_class},
                 {"per_class", data.per_class},
                 {"dim", data.dim},
                 {"class_radius", data.class_radius},
                 {"cluster_radius", data.cluster_radius},
                 {"noise_sd", data.noise_sd},
                 {"broad_clusters", data.broad_clusters},
                 {"target_clusters", data.target_clusters},
                 {"broad_per_class", data.broad_per_class},
                 {"target_per_class", data.target_per_class},
                 {"test_per_class", data.test_per_class}};
    j["diffusion"] = {{"T", diffusion.T},
                      {"beta_start", diffusion.beta_start},
                      {"beta_end", diffusion.beta_end},
                      {"ddim_steps", diffusion.ddim_steps},
                      {"eta", diffusion.eta},
                      {"epochs", diffusion.epochs},
                      {"batch", diffusion.batch},
                      {"lr", diffusion.lr},
                      {"momentum", diffusion.momentum},
                      {"cfg_dropout", diffusion.cfg_dropout},
                      {"hidden", diffusion.hidden},
                      {"time_embed_dim", diffusion.time_embed_dim}};
    j["extractor"] = {{"epochs", extractor.epochs},
                      {"batch", extractor.batch},
                      {"lr", extractor.lr},
                      {"momentum", extractor.momentum},
                      {"hidden", extractor.hidden}};
    j["prototypes"] = {{"K", prototypes.K}};
    j["guidance"] = {{"mode", guidance.mode},
                     {"rho", guidance.rho},
                     {"M", guidance.M},
                     {"steps", guidance.steps},
                     {"inner_iters", guidance.inner_iters},
                     {"lambda_g", guidance.lambda_g},
                     {"use_pc", guidance.use_pc},
                     {"use_pg", guidance.use_pg},
                     {"epsilon", guidance.epsilon},
                     {"persist_params", guidance.persist_params}};
    j["expansion"] = {{"factor", expansion.factor},
                      {"strength", expansion.strength},
                      {"cfg_scale", expansion.cfg_scale},
                      {"sampler", expansion.sampler},
                      {"threads", expansion.threads}};
    j["evaluation"] = {{"fid_samples", evaluation.fid_samples},
                       {"space", evaluation.space},
                       {"mmd_bandwidth", evaluation.mmd_bandwidth},
                       {"downstream_seeds", evaluation.downstream_seeds},
                       {"downstream_epochs", evaluation.downstream_epochs},
                       {"downstream_batch", evaluation.downstream_batch},
                       {"downstream_lr", evaluation.downstream_lr},
                       {"downstream_momentum", evaluation.downstream_momentum},
                       {"downstream_hidden", evaluation.downstream_hidden}};
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, _] : j.items()) {
        static const char* known[] = {"seed",      "data",      "diffusion", "extractor",
                                      "prototypes", "guidance",  "expansion", "evaluation"};
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("config: unknown section '" + key + "'");
    }
    RunConfig c;
    if (j.contains("seed")) {
        try {
            c.seed = j["seed"].get<std::uint64_t>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config: bad type for seed");
        }
    }
    if (j.contains("data")) {
        SectionReader r(j["data"], "data");
        r.get("generator", c.data.generator);
        r.get("classes", c.data.classes);
        r.get("clusters_per_class", c.data.clusters_per_class);
        r.get("per_class", c.data.per_class);
        r.get("dim", c.data.dim);
        r.get("class_radius", c.data.class_radius);
        r.get("cluster_radius", c.data.cluster_radius);
        r.get("noise_sd", c.data.noise_sd);
        r.get("broad_clusters", c.data.broad_clusters);
        r.get("target_clusters", c.data.target_clusters);
        r.get("broad_per_class", c.data.broad_per_class);
        r.get("target_per_class", c.data.target_per_class);
        r.get("test_per_class", c.data.test_per_class);
        r.finish();
    }
    if (j.contains("diffusion")) {
        SectionReader r(j["diffusion"], "diffusion");
        r.get("T", c.diffusion.T);
        r.get("beta_start", c.diffusion.beta_start);
        r.get("beta_end", c.diffusion.beta_end);
        r.get("ddim_steps", c.diffusion.ddim_steps);
        r.get("eta", c.diffusion.eta);
        r.get("epochs", c.diffusion.epochs);
        r.get("batch", c.diffusion.batch);
        r.get("lr", c.diffusion.lr);
        r.get("momentum", c.diffusion.momentum);
        r.get("cfg_dropout", c.diffusion.cfg_dropout);
        r.get("hidden", c.diffusion.hidden);
        r.get("time_embed_dim", c.diffusion.time_embed_dim);
        r.finish();
    }
    if (j.contains("extractor")) {
        SectionReader r(j["extractor"], "extractor");
        r.get("epochs", c.extractor.epochs);
        r.get("batch", c.extractor.batch);
        r.get("lr", c.extractor.lr);
        r.get("momentum", c.extractor.momentum);
        r.get("hidden", c.extractor.hidden);
        r.finish();
    }
    if (j.contains("prototypes")) {
        SectionReader r(j["prototypes"], "prototypes");
        r.get("K", c.prototypes.K);
        r.finish();
    }
    if (j.contains("guidance")) {
        SectionReader r(j["guidance"], "guidance");
        r.get("mode", c.guidance.mode);
        r.get("rho", c.guidance.rho);
        r.get("M", c.guidance.M);
        r.get("steps", c.guidance.steps);
        r.get("inner_iters", c.guidance.inner_iters);
        r.get("lambda_g", c.guidance.lambda_g);
        r.get("use_pc", c.guidance.use_pc);
        r.get("use_pg", c.guidance.use_pg);
        r.get("epsilon", c.guidance.epsilon);
        r.get("persist_params", c.guidance.persist_params);
        r.finish();
    }
    if (j.contains("expansion")) {
        SectionReader r(j["expansion"], "expansion");
        r.get("factor", c.expansion.factor);
        r.get("strength", c.expansion.strength);
        r.get("cfg_scale", c.expansion.cfg_scale);
        r.get("sampler", c.expansion.sampler);
        r.get("threads", c.expansion.threads);
        r.finish();
    }
    if (j.contains("evaluation")) {
        SectionReader r(j["evaluation"], "evaluation");
        r.get("fid_samples", c.evaluation.fid_samples);
        r.get("space", c.evaluation.space);
        r.get("mmd_bandwidth", c.evaluation.mmd_bandwidth);
        r.get("downstream_seeds", c.evaluation.downstream_seeds);
        r.get("downstream_epochs", c.evaluation.downstream_epochs);
        r.get("downstream_batch", c.evaluation.downstream_batch);
        r.get("downstream_lr", c.evaluation.downstream_lr);
        r.get("downstream_momentum", c.evaluation.downstream_momentum);
        r.get("downstream_hidden", c.evaluation.downstream_hidden);
        r.finish();
    }
    // Cheap eager validation of enum-ish strings.
    guide_mode_from_name(c.guidance.mode);
    sampler_from_name(c.expansion.sampler);
    if (c.evaluation.space != "feature" && c.evaluation.space != "raw")
        throw ConfigError("config: evaluation.space must be 'feature' or 'raw'");
    if (c.data.generator != "blobs" && c.data.generator != "shift")
        throw ConfigError("config: data.generator must be 'blobs' or 'shift'");
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return from_json(j);
}

GuidanceConfig RunConfig::guidance_config() const {
    GuidanceConfig g;
    g.mode = guide_mode_from_name(guidance.mode);
    g.rho = guidance.rho;
    g.M = guidance.M;
    g.steps = guidance.steps;
    g.inner_iters = guidance.inner_iters;
    g.lambda_g = guidance.lambda_g;
    g.use_pc = guidance.use_pc;
    g.use_pg = guidance.use_pg;
    g.epsilon = guidance.epsilon;
    g.persist_params = guidance.persist_params;
    g.cfg_scale = expansion.cfg_scale;
    return g;
}

std::string RunConfig::fingerprint() const { return fingerprint_bytes(to_json().dump()); }

nlohmann::json merge_config_json(nlohmann::json base, const nlohmann::json& overrides) {
    if (!overrides.is_object()) throw ConfigError("config overrides must be an object");
    for (const auto& [key, value] : overrides.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object()) {
            base[key] = merge_config_json(base[key], value);
        } else {
            base[key] = value;
        }
    }
    return base;
}

}  // namespace distdiff
