#include "distdiff/guidance.hpp"

#include <cmath>

#include "distdiff/kernels.hpp"
#include "distdiff/log.hpp"

namespace distdiff {

const char* guide_mode_name(GuideMode m) {
    switch (m) {
        case GuideMode::off: return "off";
        case GuideMode::transform: return "transform";
        case GuideMode::direct_latent: return "direct-latent";
    }
    return "?";
}

GuideMode guide_mode_from_name(const std::string& name) {
    if (name == "off") return GuideMode::off;
    if (name == "transform") return GuideMode::transform;
    if (name == "direct-latent") return GuideMode::direct_latent;
    throw ConfigError("unknown guidance mode '" + name + "'");
}

void GuidanceConfig::validate(int sampler_steps) const {
    if (rho < 0.0) throw ConfigError("guidance: rho must be >= 0");
    if (M < 1 || M > sampler_steps)
        throw ConfigError("guidance: M must be in [1, sampler steps=" + std::to_string(sampler_steps) + "]");
    if (steps < 1) throw ConfigError("guidance: steps must be >= 1");
    if (inner_iters < 1) throw ConfigError("guidance: inner_iters must be >= 1");
    if (lambda_g < 0.0) throw ConfigError("guidance: lambda_g must be >= 0");
    if (epsilon < 0.0) throw ConfigError("guidance: epsilon must be >= 0");
    if (cfg_scale < 0.0) throw ConfigError("guidance: cfg_scale must be >= 0");
}

GuidanceContext::GuidanceContext(const Denoiser& den, const NoiseSchedule& s,
                                 const FeatureExtractor& ex, const PrototypeSet& protos)
    : denoiser(den), sched(s), extractor(ex), prototypes(protos) {
    if (protos.extractor_fingerprint != ex.fingerprint())
        throw DataError("guidance: prototype set was built with a different extractor (fingerprint " +
                        protos.extractor_fingerprint + " vs " + ex.fingerprint() + ")");
}

TransformParams init_transform(std::size_t d, Rng& rng, double epsilon) {
    if (d < 1) throw ContractError("init_transform: d must be >= 1");
    TransformParams p;
    p.epsilon = epsilon;
    p.e = Tensor::zeros({d});
    p.b = Tensor::zeros({d});
    for (double& v : p.e.data) v = rng.uniform();
    for (double& v : p.b.data) v = rng.normal();
    return p;
}

Tensor apply_transform(const Tensor& z, const TransformParams& params) {
    if (!z.same_shape(params.e) || !z.same_shape(params.b))
        throw ContractError("apply_transform: parameter dimension does not match latent " +
                            shape_str(z.shape));
    Tensor out = Tensor::zeros(z.shape);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        double w = (1.0 + params.e.data[i]) * z.data[i] + params.b.data[i];
        double lo = z.data[i] - params.epsilon;
        double hi = z.data[i] + params.epsilon;
        out.data[i] = std::min(std::max(w, lo), hi);
    }
    return out;
}

namespace {

Tensor as_row(const Tensor& v) {
    if (v.shape.size() == 1) return Tensor({1, v.shape[0]}, v.data);
    if (v.shape.size() == 2 && v.rows() == 1) return v;
    throw ContractError("guidance: latent must be a vector, got " + shape_str(v.shape));
}

// z_t -> eps_hat -> z0|t -> features -> D_c + lambda_g * D_g
Var build_energy(Tape& tape, Var latent, int t, int label, const GuidanceContext& ctx,
                 double lambda_g, double cfg_scale, bool use_pc, bool use_pg) {
    const ClassPrototypes& cp = ctx.prototypes.for_class(label);
    Var eps = cfg_eps(tape, ctx.denoiser, latent, t, label, cfg_scale);
    Var x0 = predict_x0(tape, latent, t, eps, ctx.sched);
    Var f = ctx.extractor.features(tape, x0);

    Var total;
    if (use_pc) {
        Var diff = tape.sub(f, tape.constant(Tensor({1, cp.p_c.numel()}, cp.p_c.data)));
        total = tape.sqrt(tape.sum(tape.square(diff)));
    }
    if (use_pg) {
        Tensor f_now = Tensor({tape.value(f).cols()}, tape.value(f).data);
        std::size_t j = dist_group(f_now, cp.p_g).second;
        Var diff = tape.sub(f, tape.constant(Tensor({1, cp.p_g[j].numel()}, cp.p_g[j].data)));
        Var dg = tape.scale(tape.sqrt(tape.sum(tape.square(diff))), lambda_g);
        total = total.valid() ? tape.add(total, dg) : dg;
    }
    if (!total.valid()) total = tape.constant(Tensor::scalar(0.0));
    return total;
}

}  // namespace

double energy(const Tensor& z_t, int t, int label, const GuidanceContext& ctx,
              const GuidanceConfig& cfg) {
    Tape tape;
    Var z = tape.constant(as_row(z_t));
    Var e = build_energy(tape, z, t, label, ctx, cfg.lambda_g, cfg.cfg_scale, cfg.use_pc, cfg.use_pg);
    return tape.value(e).scalar_value();
}

double energy(const Tensor& z_t, int t, int label, const Denoiser& den, const NoiseSchedule& sched,
              const FeatureExtractor& ex, const PrototypeSet& protos, double lambda_g) {
    GuidanceContext ctx(den, sched, ex, protos);
    GuidanceConfig cfg;
    cfg.lambda_g = lambda_g;
    return energy(z_t, t, label, ctx, cfg);
}

std::pair<double, Tensor> energy_with_grad_z(const Tensor& z_t, int t, int label,
                                             const GuidanceContext& ctx, const GuidanceConfig& cfg) {
    Tape tape;
    Var z = tape.leaf(as_row(z_t), true);
    Var e = build_energy(tape, z, t, label, ctx, cfg.lambda_g, cfg.cfg_scale, cfg.use_pc, cfg.use_pg);
    tape.backward(e);
    Tensor g = tape.grad(z);
    return {tape.value(e).scalar_value(), Tensor(z_t.shape, std::move(g.data))};
}

GuideStepResult guide_step(const Tensor& z_t, int t, int label, TransformParams params,
                           const GuidanceConfig& cfg, const GuidanceContext& ctx) {
    if (!z_t.same_shape(params.e))
        throw ContractError("guide_step: transform dimension does not match latent");
    GuideStepResult result;
    std::size_t d = z_t.numel();
    Tensor z_row = as_row(z_t);

    for (int iter = 0; iter < cfg.inner_iters; ++iter) {
        Tape tape;
        Var zc = tape.constant(z_row);
        Var e = tape.leaf(Tensor({1, d}, params.e.data), true);
        Var b = tape.leaf(Tensor({1, d}, params.b.data), true);
        // Unprojected transform: z + e.z + b
        Var w = tape.add(tape.add(zc, tape.mul(e, zc)), b);
        Var en = build_energy(tape, w, t, label, ctx, cfg.lambda_g, cfg.cfg_scale, cfg.use_pc,
                              cfg.use_pg);
        if (iter == 0) result.energy_before = tape.value(en).scalar_value();
        Tensor ge, gb;
        try {
            tape.backward(en);
            ge = tape.grad(e);
            gb = tape.grad(b);
            ge.ensure_finite("guidance gradient e");
            gb.ensure_finite("guidance gradient b");
        } catch (const NumericalError& err) {
            warn(std::string("guide_step: aborting guidance for this sample: ") + err.what());
            result.ok = false;
            result.energy_after = result.energy_before;
            return result;
        }
        kernels::axpby(1.0, params.e.data.data(), -cfg.rho, ge.data.data(), params.e.data.data(), d);
        kernels::axpby(1.0, params.b.data.data(), -cfg.rho, gb.data.data(), params.b.data.data(), d);
    }

    {
        // Energy at the updated parameters, for telemetry.
        Tape tape;
        Var zc = tape.constant(z_row);
        Var e = tape.constant(Tensor({1, d}, params.e.data));
        Var b = tape.constant(Tensor({1, d}, params.b.data));
        Var w = tape.add(tape.add(zc, tape.mul(e, zc)), b);
        Var en = build_energy(tape, w, t, label, ctx, cfg.lambda_g, cfg.cfg_scale, cfg.use_pc,
                              cfg.use_pg);
        result.energy_after = tape.value(en).scalar_value();
    }
    result.params = std::move(params);
    return result;
}

GuidedUpdateResult guided_update(const Tensor& z_t, int t, int label, const GuidanceConfig& cfg,
                                 const GuidanceContext& ctx, Rng& rng, TransformParams* persisted) {
    GuidedUpdateResult result;
    std::size_t d = z_t.numel();

    if (cfg.mode == GuideMode::direct_latent) {
        Tensor v = z_t;
        result.energy_before = energy(v, t, label, ctx, cfg);
        for (int iter = 0; iter < cfg.inner_iters; ++iter) {
            std::pair<double, Tensor> eg;
            try {
                eg = energy_with_grad_z(v, t, label, ctx, cfg);
                eg.second.ensure_finite("guidance gradient z");
            } catch (const NumericalError& err) {
                warn(std::string("guided_update: aborting direct-latent guidance: ") + err.what());
                result.z = z_t;
                result.ok = false;
                result.energy_after = result.energy_before;
                return result;
            }
            kernels::axpby(1.0, v.data.data(), -cfg.rho, eg.second.data.data(), v.data.data(), d);
        }
        result.energy_after = energy(v, t, label, ctx, cfg);
        result.z = std::move(v);
        return result;
    }
    if (cfg.mode != GuideMode::transform)
        throw ContractError("guided_update: called with guidance off");

    TransformParams params;
    if (cfg.persist_params && persisted && persisted->e.numel() == d) {
        params = *persisted;
        params.epsilon = cfg.epsilon;
    } else {
        params = init_transform(d, rng, cfg.epsilon);
    }

    GuideStepResult step = guide_step(z_t, t, label, std::move(params), cfg, ctx);
    result.energy_before = step.energy_before;
    result.energy_after = step.energy_after;
    result.ok = step.ok;
    if (!step.ok) {
        result.z = z_t;
        return result;
    }
    if (cfg.persist_params && persisted) *persisted = step.params;

    result.z = apply_transform(z_t, step.params);
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < d; ++i) {
        double w = (1.0 + step.params.e.data[i]) * z_t.data[i] + step.params.b.data[i];
        if (std::abs(w - z_t.data[i]) > step.params.epsilon) ++clipped;
    }
    result.clipped_fraction = d ? static_cast<double>(clipped) / static_cast<double>(d) : 0.0;
    return result;
}

}  // namespace distdiff
