#include "distdiff/ablation.hpp"

#include <algorithm>
#include <sstream>

#include "distdiff/threading.hpp"

namespace distdiff {

namespace {

nlohmann::json guidance_override(const char* key, nlohmann::json value) {
    return {{"guidance", {{key, std::move(value)}}}};
}

}  // namespace

AblationGrid builtin_grid(const std::string& name) {
    AblationGrid g;
    g.name = name;
    if (name == "prototype") {
        g.cells = {{"none", {{"guidance", {{"use_pc", false}, {"use_pg", false}}}}},
                   {"pg_only", {{"guidance", {{"use_pc", false}, {"use_pg", true}}}}},
                   {"pc_only", {{"guidance", {{"use_pc", true}, {"use_pg", false}}}}},
                   {"both", {{"guidance", {{"use_pc", true}, {"use_pg", true}}}}}};
    } else if (name == "m") {
        for (int m : {1, 10, 20, 25})
            g.cells.push_back({"m" + std::to_string(m), guidance_override("M", m)});
    } else if (name == "k") {
        for (int k : {2, 3, 4, 5})
            g.cells.push_back({"k" + std::to_string(k), {{"prototypes", {{"K", k}}}}});
    } else if (name == "steps") {
        for (int s : {1, 2, 3, 4})
            g.cells.push_back({"steps" + std::to_string(s), guidance_override("steps", s)});
    } else if (name == "rho") {
        for (double r : {0.1, 1.0, 10.0, 20.0}) {
            std::ostringstream os;
            os << "rho" << r;
            g.cells.push_back({os.str(), guidance_override("rho", r)});
        }
    } else if (name == "lambda-g") {
        for (double l : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 2.0}) {
            std::ostringstream os;
            os << "lambda" << l;
            g.cells.push_back({os.str(), guidance_override("lambda_g", l)});
        }
    } else if (name == "mode") {
        g.cells = {{"transform", guidance_override("mode", "transform")},
                   {"direct-latent", guidance_override("mode", "direct-latent")}};
    } else {
        throw ConfigError("unknown built-in grid '" + name + "'");
    }
    return g;
}

AblationGrid grid_from_json(const nlohmann::json& j) {
    AblationGrid g;
    try {
        g.name = j.at("name").get<std::string>();
        for (const auto& c : j.at("cells")) {
            AblationCell cell;
            cell.name = c.at("name").get<std::string>();
            cell.overrides = c.contains("overrides") ? c.at("overrides") : nlohmann::json::object();
            g.cells.push_back(std::move(cell));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("grid file: ") + e.what());
    }
    if (g.cells.empty()) throw ConfigError("grid file: no cells");
    return g;
}

AblationRunResult run_ablation(const AblationGrid& grid, const AblationInputs& inputs,
                               const RunConfig& base, unsigned threads) {
    AblationRunResult result;
    result.grid_name = grid.name;
    result.cells.resize(grid.cells.size());
    nlohmann::json base_snapshot = base.to_json();

    // The original-only downstream baseline is cell-independent.
    std::optional<DownstreamResult> acc_original;
    if (inputs.test && inputs.test->size() > 0) {
        DownstreamConfig dc;
        dc.epochs = base.evaluation.downstream_epochs;
        dc.batch = base.evaluation.downstream_batch;
        dc.lr = base.evaluation.downstream_lr;
        dc.momentum = base.evaluation.downstream_momentum;
        dc.hidden = base.evaluation.downstream_hidden;
        std::vector<std::uint64_t> seeds;
        for (int s = 0; s < base.evaluation.downstream_seeds; ++s)
            seeds.push_back(derive_seed(base.seed, {0x646f776eULL, static_cast<std::uint64_t>(s)}));
        acc_original = downstream_eval(inputs.original, *inputs.test, dc, seeds);
    }

    parallel_for(grid.cells.size(), threads, [&](std::size_t ci) {
        const AblationCell& cell = grid.cells[ci];
        nlohmann::json cell_json = merge_config_json(base_snapshot, cell.overrides);
        RunConfig cfg = RunConfig::from_json(cell_json);

        PrototypeSet protos = build_prototypes(inputs.original, inputs.extractor, cfg.prototypes.K);
        PipelineModels models = PipelineModels::assemble(inputs.denoiser, inputs.extractor,
                                                         std::move(protos), cfg.diffusion.ddim_steps);
        ExpansionConfig xcfg;
        xcfg.strength = cfg.expansion.strength;
        xcfg.cfg_scale = cfg.expansion.cfg_scale;
        xcfg.eta = cfg.diffusion.eta;
        xcfg.sampler = sampler_from_name(cfg.expansion.sampler);
        xcfg.guidance = cfg.guidance_config();
        if (xcfg.guidance.mode != GuideMode::off)
            xcfg.guidance.validate(cfg.diffusion.ddim_steps);
        xcfg.threads = 1;  // cells already run in parallel

        ExpansionResult xr = expand_dataset(inputs.original, cfg.expansion.factor, models, xcfg,
                                            cfg.seed);

        AlignmentOptions opts;
        opts.feature_space = cfg.evaluation.space == "feature";
        opts.max_samples = cfg.evaluation.fid_samples;
        opts.mmd_bandwidth = cfg.evaluation.mmd_bandwidth;
        opts.seed = cfg.seed;
        MetricReport rep = alignment_report(inputs.original, xr.synthetic, &models.extractor,
                                            &models.prototypes, opts);

        if (acc_original) {
            DownstreamConfig dc;
            dc.epochs = cfg.evaluation.downstream_epochs;
            dc.batch = cfg.evaluation.downstream_batch;
            dc.lr = cfg.evaluation.downstream_lr;
            dc.momentum = cfg.evaluation.downstream_momentum;
            dc.hidden = cfg.evaluation.downstream_hidden;
            std::vector<std::uint64_t> seeds;
            for (int s = 0; s < cfg.evaluation.downstream_seeds; ++s)
                seeds.push_back(derive_seed(cfg.seed, {0x646f776eULL, static_cast<std::uint64_t>(s)}));
            Dataset merged = merge_datasets(inputs.original, xr.synthetic);
            rep.acc_original = *acc_original;
            rep.acc_expanded = downstream_eval(merged, *inputs.test, dc, seeds);
            rep.delta = rep.acc_expanded->mean - rep.acc_original->mean;
        }

        result.cells[ci] = {cell.name, std::move(cell_json), std::move(rep)};
    });

    // Informational direction flags.
    auto frechet_of = [&](const std::string& name) -> const double* {
        for (const auto& c : result.cells)
            if (c.cell == name) return &c.report.frechet;
        return nullptr;
    };
    nlohmann::json flags = nlohmann::json::object();
    if (grid.name == "prototype") {
        const double* none = frechet_of("none");
        const double* pg = frechet_of("pg_only");
        const double* pc = frechet_of("pc_only");
        const double* both = frechet_of("both");
        if (none && pg && pc && both) {
            flags["both_le_pc"] = *both <= *pc;
            flags["both_le_pg"] = *both <= *pg;
            flags["pc_lt_none"] = *pc < *none;
            flags["pg_lt_none"] = *pg < *none;
            flags["both_lt_none"] = *both < *none;
        }
    }
    {
        std::vector<std::pair<double, std::string>> ranked;
        for (const auto& c : result.cells) ranked.emplace_back(c.report.frechet, c.cell);
        std::sort(ranked.begin(), ranked.end());
        auto order = nlohmann::json::array();
        for (const auto& [_, name] : ranked) order.push_back(name);
        flags["ranking_by_frechet"] = std::move(order);
    }
    result.direction_flags = std::move(flags);
    return result;
}

namespace {

std::string opt_str(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
}

std::string num_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string ablation_csv(const AblationRunResult& result) {
    std::ostringstream os;
    os << "grid,cell,seed,factor,sampler,mode,rho,M,steps,inner_iters,lambda_g,use_pc,use_pg,"
          "epsilon,K,strength,cfg_scale,space,frechet,mmd2,mean_dc,mean_dg,"
          "acc_original_mean,acc_original_sd,acc_expanded_mean,acc_expanded_sd,delta\n";
    for (const auto& c : result.cells) {
        RunConfig cfg = RunConfig::from_json(c.config_snapshot);
        const MetricReport& r = c.report;
        os << result.grid_name << ',' << c.cell << ',' << cfg.seed << ',' << cfg.expansion.factor
           << ',' << cfg.expansion.sampler << ',' << cfg.guidance.mode << ','
           << num_str(cfg.guidance.rho) << ',' << cfg.guidance.M << ',' << cfg.guidance.steps << ','
           << cfg.guidance.inner_iters << ',' << num_str(cfg.guidance.lambda_g) << ','
           << (cfg.guidance.use_pc ? 1 : 0) << ',' << (cfg.guidance.use_pg ? 1 : 0) << ','
           << num_str(cfg.guidance.epsilon) << ',' << cfg.prototypes.K << ','
           << num_str(cfg.expansion.strength) << ',' << num_str(cfg.expansion.cfg_scale) << ','
           << r.space << ',' << num_str(r.frechet) << ',' << num_str(r.mmd2) << ','
           << opt_str(r.mean_dc) << ',' << opt_str(r.mean_dg) << ','
           << (r.acc_original ? num_str(r.acc_original->mean) : "") << ','
           << (r.acc_original ? num_str(r.acc_original->sd) : "") << ','
           << (r.acc_expanded ? num_str(r.acc_expanded->mean) : "") << ','
           << (r.acc_expanded ? num_str(r.acc_expanded->sd) : "") << ',' << opt_str(r.delta)
           << "\n";
    }
    return os.str();
}

nlohmann::json ablation_json(const AblationRunResult& result) {
    nlohmann::json j;
    j["grid"] = result.grid_name;
    auto cells = nlohmann::json::array();
    for (const auto& c : result.cells) {
        cells.push_back({{"cell", c.cell},
                         {"config", c.config_snapshot},
                         {"report", c.report.to_json()}});
    }
    j["cells"] = std::move(cells);
    j["direction_flags"] = result.direction_flags;
    return j;
}

}  // namespace distdiff
