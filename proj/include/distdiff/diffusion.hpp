#pragma once

#include <functional>

#include <json.hpp>

#include "distdiff/dataset.hpp"
#include "distdiff/mlp.hpp"
#include "distdiff/schedule.hpp"

namespace distdiff {

// Noise predictor given (latent, step); labels are bound by the caller.
using EpsFn = std::function<Tensor(const Tensor& z, int t)>;

// Hook called while the latent sits at a sampling position with `remaining`
// steps left before completion; returns the (possibly updated) latent.
using GuidanceHook = std::function<Tensor(const Tensor& z, int remaining, int t)>;

inline constexpr int kNullLabel = -1;

// Conditional noise predictor: an Mlp on [z | time embedding | label one-hot].
// The unconditional branch substitutes a dedicated null slot in the one-hot,
// never zeroed inputs.
struct Denoiser {
    Mlp net;
    int num_classes = 0;
    int time_embed_dim = 8;
    int data_dim = 0;
    int T = 0;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double cfg_dropout = 0.1;

    bool uncond_trained() const { return cfg_dropout > 0.0; }
    NoiseSchedule schedule() const { return NoiseSchedule::linear(T, beta_start, beta_end); }

    Tensor time_embedding(int t) const;
    Tensor label_embedding(int label) const;

    // z is (d,) or (n,d); the result has the same shape.
    Tensor eps(const Tensor& z, int t, int label) const;
    // Taped variant for guidance; z is a rank-2 (1,d) variable, weights are
    // tape constants.
    Var eps(Tape& tape, Var z, int t, int label) const;

    nlohmann::json to_json() const;
    static Denoiser from_json(const nlohmann::json& j);
    std::string fingerprint() const;
};

// Forward process: z_t = sqrt(abar_t) x0 + sqrt(1-abar_t) noise.
Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched);

// Clean-point prediction: z0|t = (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t).
Tensor predict_x0(const Tensor& z_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched);
Var predict_x0(Tape& tape, Var z_t, int t, Var eps_hat, const NoiseSchedule& sched);

// Classifier-free combination eps_u + s (eps_c - eps_u). Warns when the
// unconditional branch was never trained and s != 1.
Tensor cfg_eps(const Denoiser& den, const Tensor& z, int t, int label, double scale);
Var cfg_eps(Tape& tape, const Denoiser& den, Var z, int t, int label, double scale);

// One reverse step t -> t_prev. Deterministic when eta == 0; rng may be null
// in that case.
Tensor ddim_step(const Tensor& z_t, int t, int t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, double eta, Rng* rng);

// Score-style update z_t = (1 + beta/2) z_{t+1} + beta psi(z_{t+1}, t+1)
//                        + sqrt(beta) delta, with delta = 0 at t == 0.
Tensor ancestral_step(const Tensor& z_next, int t, const EpsFn& psi, const NoiseSchedule& sched,
                      Rng& rng);

// Reverse samplers walking a whole trajectory. `start_index` / `t_start`
// select where along the (partially noised) trajectory sampling begins.
Tensor sample_ddim(Tensor z, int start_index, const DdimGrid& grid, const EpsFn& eps,
                   const NoiseSchedule& sched, double eta, Rng& rng,
                   const GuidanceHook& hook = nullptr);
Tensor sample_ancestral(Tensor z, int t_start, const EpsFn& psi, const NoiseSchedule& sched,
                        Rng& rng, const GuidanceHook& hook = nullptr);

struct DenoiserTrainConfig {
    int epochs = 150;
    int batch = 64;
    double lr = 0.02;
    double momentum = 0.9;
    double cfg_dropout = 0.1;
    std::vector<std::size_t> hidden = {64, 64};
    int time_embed_dim = 8;
};

struct DenoiserTrainResult {
    Denoiser denoiser;
    std::vector<double> epoch_loss;
    double final_epoch_loss = 0.0;
};

// Epsilon-prediction training with classifier-free label dropout.
DenoiserTrainResult train_denoiser(const Dataset& data, const NoiseSchedule& sched,
                                   const DenoiserTrainConfig& cfg, std::uint64_t seed);

}  // namespace distdiff
