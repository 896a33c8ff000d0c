#include "distdiff/expansion.hpp"

#include <cmath>

#include "distdiff/log.hpp"
#include "distdiff/threading.hpp"

namespace distdiff {

const char* sampler_name(SamplerKind s) {
    return s == SamplerKind::ddim ? "ddim" : "ancestral";
}

SamplerKind sampler_from_name(const std::string& name) {
    if (name == "ddim") return SamplerKind::ddim;
    if (name == "ancestral") return SamplerKind::ancestral;
    throw ConfigError("unknown sampler '" + name + "'");
}

PipelineModels PipelineModels::assemble(Denoiser den, FeatureExtractor ex, PrototypeSet protos,
                                        int ddim_steps) {
    PipelineModels m{std::move(den), std::move(ex), std::move(protos), {}, {}};
    m.sched = m.denoiser.schedule();
    m.grid = DdimGrid::uniform(m.sched.T, ddim_steps);
    return m;
}

namespace {

int start_index_for_strength(double strength, int steps) {
    // Nearest grid step, minimum 1.
    int idx = static_cast<int>(std::llround(strength * steps));
    return std::min(std::max(idx, 1), steps);
}

}  // namespace

std::vector<double> expand_sample(const std::vector<double>& x, int y, const PipelineModels& models,
                                  const GuidanceContext& ctx, const ExpansionConfig& cfg, Rng& rng,
                                  SampleTelemetry* telemetry) {
    if (cfg.strength < 0.0 || cfg.strength > 1.0)
        throw ConfigError("expand: strength must be in [0,1]");
    if (cfg.strength == 0.0) return x;

    std::size_t d = x.size();
    Tensor x0 = Tensor::vector(x);
    Tensor noise = Tensor::zeros({d});
    for (double& v : noise.data) v = rng.normal();

    const bool guided = cfg.guidance.mode != GuideMode::off;
    TransformParams persisted;
    GuidanceHook hook = nullptr;
    if (guided) {
        hook = [&](const Tensor& z, int remaining, int t) -> Tensor {
            if (!cfg.guidance.fires_at(remaining)) return z;
            GuidedUpdateResult r = guided_update(z, t, y, cfg.guidance, ctx, rng,
                                                 cfg.guidance.persist_params ? &persisted : nullptr);
            if (telemetry) {
                telemetry->guided_steps.push_back(
                    {remaining, r.energy_before, r.energy_after, r.clipped_fraction, r.ok});
                if (!r.ok) telemetry->fallback_unguided = true;
            }
            return r.z;
        };
    }

    Tensor out;
    if (cfg.sampler == SamplerKind::ddim) {
        int start = start_index_for_strength(cfg.strength, models.grid.steps());
        Tensor z_t = q_sample(x0, models.grid.tau(start), noise, models.sched);
        EpsFn eps = [&](const Tensor& z, int t) {
            return cfg_eps(models.denoiser, z, t, y, cfg.cfg_scale);
        };
        out = sample_ddim(std::move(z_t), start, models.grid, eps, models.sched, cfg.eta, rng, hook);
    } else {
        int t_start = std::min(std::max(static_cast<int>(std::llround(cfg.strength * models.sched.T)), 1),
                               models.sched.T);
        Tensor z_t = q_sample(x0, t_start, noise, models.sched);
        EpsFn psi = [&](const Tensor& z, int t) {
            return cfg_eps(models.denoiser, z, t, y, cfg.cfg_scale);
        };
        out = sample_ancestral(std::move(z_t), t_start, psi, models.sched, rng, hook);
    }
    out.ensure_finite("expanded sample");
    return out.data;
}

ExpansionResult expand_dataset(const Dataset& original, int factor, const PipelineModels& models,
                               const ExpansionConfig& cfg, std::uint64_t seed) {
    if (factor < 1) throw ConfigError("expand: factor must be >= 1");
    if (original.size() == 0) throw DataError("expand: empty dataset");

    GuidanceContext ctx(models.denoiser, models.sched, models.extractor, models.prototypes);

    if (cfg.guidance.mode != GuideMode::off) {
        int horizon = cfg.sampler == SamplerKind::ddim
                          ? start_index_for_strength(cfg.strength, models.grid.steps())
                          : static_cast<int>(std::llround(cfg.strength * models.sched.T));
        if (cfg.guidance.M > horizon)
            warn("expand: guided step M=" + std::to_string(cfg.guidance.M) +
                 " is beyond the trajectory start (" + std::to_string(horizon) +
                 " steps at strength " + std::to_string(cfg.strength) + "); guidance never fires");
    }

    std::size_t n = original.size();
    std::size_t total = n * static_cast<std::size_t>(factor);
    ExpansionResult result;
    result.synthetic.d = original.d;
    result.synthetic.provenance = Provenance::synthetic;
    result.synthetic.class_names = original.class_names;
    result.synthetic.samples.resize(total);
    result.telemetry.resize(total);

    parallel_for(total, cfg.threads, [&](std::size_t slot) {
        std::size_t i = slot / factor;
        std::size_t r = slot % factor;
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(r)}));
        SampleTelemetry tel;
        tel.sample_id = static_cast<long long>(slot);
        const Sample& src = original.samples[i];
        Sample out;
        out.y = src.y;
        out.source = static_cast<long long>(i);
        out.x = expand_sample(src.x, src.y, models, ctx, cfg, rng, &tel);
        result.synthetic.samples[slot] = std::move(out);
        result.telemetry[slot] = std::move(tel);
    });
    return result;
}

nlohmann::json telemetry_to_json(const std::vector<SampleTelemetry>& telemetry) {
    nlohmann::json samples = nlohmann::json::array();
    double before_sum = 0.0, after_sum = 0.0;
    std::size_t guided = 0, fallbacks = 0;
    for (const SampleTelemetry& t : telemetry) {
        nlohmann::json steps = nlohmann::json::array();
        for (const GuidedStepRecord& g : t.guided_steps) {
            steps.push_back({{"step", g.step},
                             {"energy_before", g.energy_before},
                             {"energy_after", g.energy_after},
                             {"clipped_fraction", g.clipped_fraction},
                             {"ok", g.ok}});
            if (g.ok) {
                before_sum += g.energy_before;
                after_sum += g.energy_after;
                ++guided;
            }
        }
        if (t.fallback_unguided) ++fallbacks;
        samples.push_back({{"sample_id", t.sample_id},
                           {"guided_steps", std::move(steps)},
                           {"fallback_unguided", t.fallback_unguided}});
    }
    nlohmann::json j;
    j["samples"] = std::move(samples);
    j["summary"] = {{"guided_step_count", guided},
                    {"fallback_count", fallbacks},
                    {"mean_energy_before", guided ? before_sum / guided : 0.0},
                    {"mean_energy_after", guided ? after_sum / guided : 0.0}};
    return j;
}

}  // namespace distdiff
