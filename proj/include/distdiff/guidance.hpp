#pragma once

#include <string>
#include <utility>

#include "distdiff/diffusion.hpp"
#include "distdiff/prototypes.hpp"

namespace distdiff {

// Residual multiplicative transform (1+e).z + b with an L-inf epsilon-ball
// projection around the original latent.
struct TransformParams {
    Tensor e;
    Tensor b;
    double epsilon = 0.2;
};

enum class GuideMode { off, transform, direct_latent };
const char* guide_mode_name(GuideMode m);
GuideMode guide_mode_from_name(const std::string& name);

struct GuidanceConfig {
    GuideMode mode = GuideMode::transform;
    double rho = 10.0;
    int M = 20;            // remaining-step index at which guidance fires
    int steps = 1;         // consecutive guided steps (M, M-1, ...)
    int inner_iters = 1;   // gradient iterations per guided step
    double lambda_g = 1.0; // weight of the group-level term
    bool use_pc = true;
    bool use_pg = true;
    double epsilon = 0.2;
    double cfg_scale = 7.5;
    bool persist_params = false;  // keep (e,b) across consecutive guided steps

    void validate(int sampler_steps) const;
    bool fires_at(int remaining) const {
        return remaining <= M && remaining > M - steps;
    }
};

// Bundles the immutable models and verifies extractor/prototype provenance
// once at construction.
struct GuidanceContext {
    const Denoiser& denoiser;
    const NoiseSchedule& sched;
    const FeatureExtractor& extractor;
    const PrototypeSet& prototypes;

    GuidanceContext(const Denoiser& den, const NoiseSchedule& s, const FeatureExtractor& ex,
                    const PrototypeSet& protos);
};

// e ~ U[0,1), b ~ N(0,1), per dimension, drawn e first then b.
TransformParams init_transform(std::size_t d, Rng& rng, double epsilon);

Tensor apply_transform(const Tensor& z, const TransformParams& params);

// Hierarchical energy D_c + lambda_g * D_g evaluated on the predicted clean
// point, differentiable through the denoiser and the extractor.
double energy(const Tensor& z_t, int t, int label, const GuidanceContext& ctx,
              const GuidanceConfig& cfg);
double energy(const Tensor& z_t, int t, int label, const Denoiser& den, const NoiseSchedule& sched,
              const FeatureExtractor& ex, const PrototypeSet& protos, double lambda_g);
std::pair<double, Tensor> energy_with_grad_z(const Tensor& z_t, int t, int label,
                                             const GuidanceContext& ctx, const GuidanceConfig& cfg);

struct GuideStepResult {
    TransformParams params;
    double energy_before = 0.0;
    double energy_after = 0.0;
    bool ok = true;  // false: non-finite gradient, params returned unchanged
};

// inner_iters gradient descent updates of (e,b) at learning rate rho. The
// energy is evaluated on the unprojected transform; projection happens when
// the caller materialises the latent.
GuideStepResult guide_step(const Tensor& z_t, int t, int label, TransformParams params,
                           const GuidanceConfig& cfg, const GuidanceContext& ctx);

struct GuidedUpdateResult {
    Tensor z;
    double energy_before = 0.0;
    double energy_after = 0.0;
    double clipped_fraction = 0.0;  // share of dimensions at the epsilon boundary
    bool ok = true;
};

// One guided step: transform mode initialises (e,b), optimises them and
// returns the projected transformed latent; direct-latent mode returns
// z - rho * grad_z(energy) with no transform and no projection.
GuidedUpdateResult guided_update(const Tensor& z_t, int t, int label, const GuidanceConfig& cfg,
                                 const GuidanceContext& ctx, Rng& rng,
                                 TransformParams* persisted = nullptr);

}  // namespace distdiff
