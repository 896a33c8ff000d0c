#include "distdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "distdiff/kernels.hpp"
#include "distdiff/log.hpp"

namespace distdiff {

Tensor Denoiser::time_embedding(int t) const {
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ConfigError("denoiser: time_embed_dim must be even and >= 2");
    int half = time_embed_dim / 2;
    Tensor e = Tensor::zeros({static_cast<std::size_t>(time_embed_dim)});
    double tau = static_cast<double>(t) / static_cast<double>(T);
    for (int k = 0; k < half; ++k) {
        // Frequencies spread geometrically from 1 to 1000 over tau in [0,1].
        double omega = std::pow(1000.0, half > 1 ? static_cast<double>(k) / (half - 1) : 0.0);
        e.data[2 * k] = std::sin(omega * tau);
        e.data[2 * k + 1] = std::cos(omega * tau);
    }
    return e;
}

Tensor Denoiser::label_embedding(int label) const {
    Tensor e = Tensor::zeros({static_cast<std::size_t>(num_classes + 1)});
    if (label == kNullLabel) {
        e.data[num_classes] = 1.0;
    } else {
        if (label < 0 || label >= num_classes)
            throw ContractError("denoiser: label " + std::to_string(label) + " out of range");
        e.data[label] = 1.0;
    }
    return e;
}

namespace {

Tensor assemble_input(const Denoiser& den, const Tensor& z, int t, int label) {
    bool vec = z.shape.size() == 1;
    std::size_t n = vec ? 1 : z.rows();
    std::size_t d = vec ? z.shape[0] : z.cols();
    if (d != static_cast<std::size_t>(den.data_dim))
        throw ContractError("denoiser: latent dimension mismatch");
    Tensor temb = den.time_embedding(t);
    Tensor lemb = den.label_embedding(label);
    std::size_t width = d + temb.numel() + lemb.numel();
    Tensor in = Tensor::zeros({n, width});
    for (std::size_t i = 0; i < n; ++i) {
        double* row = in.data.data() + i * width;
        std::copy_n(z.data.data() + i * d, d, row);
        std::copy_n(temb.data.data(), temb.numel(), row + d);
        std::copy_n(lemb.data.data(), lemb.numel(), row + d + temb.numel());
    }
    return in;
}

}  // namespace

Tensor Denoiser::eps(const Tensor& z, int t, int label) const {
    Tensor out = net.forward(assemble_input(*this, z, t, label));
    if (z.shape.size() == 1) return Tensor({z.shape[0]}, std::move(out.data));
    return out;
}

Var Denoiser::eps(Tape& tape, Var z, int t, int label) const {
    const Tensor& vz = tape.value(z);
    if (vz.shape.size() != 2 || vz.cols() != static_cast<std::size_t>(data_dim))
        throw ContractError("denoiser: taped latent must be (n, d)");
    std::size_t n = vz.rows();
    Tensor temb_row = time_embedding(t);
    Tensor lemb_row = label_embedding(label);
    Tensor temb = Tensor::zeros({n, temb_row.numel()});
    Tensor lemb = Tensor::zeros({n, lemb_row.numel()});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(temb_row.data.data(), temb_row.numel(), temb.data.data() + i * temb_row.numel());
        std::copy_n(lemb_row.data.data(), lemb_row.numel(), lemb.data.data() + i * lemb_row.numel());
    }
    Var input = tape.concat_cols({z, tape.constant(std::move(temb)), tape.constant(std::move(lemb))});
    return net.forward(tape, input);
}

nlohmann::json Denoiser::to_json() const {
    nlohmann::json j;
    j["header"] = {{"T", T},
                   {"beta_start", beta_start},
                   {"beta_end", beta_end},
                   {"num_classes", num_classes},
                   {"time_embed_dim", time_embed_dim},
                   {"data_dim", data_dim},
                   {"cfg_dropout", cfg_dropout}};
    j["weights"] = net.to_json();
    return j;
}

Denoiser Denoiser::from_json(const nlohmann::json& j) {
    Denoiser d;
    try {
        const auto& h = j.at("header");
        d.T = h.at("T").get<int>();
        d.beta_start = h.at("beta_start").get<double>();
        d.beta_end = h.at("beta_end").get<double>();
        d.num_classes = h.at("num_classes").get<int>();
        d.time_embed_dim = h.at("time_embed_dim").get<int>();
        d.data_dim = h.at("data_dim").get<int>();
        d.cfg_dropout = h.at("cfg_dropout").get<double>();
        d.net = Mlp::from_json(j.at("weights"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("denoiser json: ") + e.what());
    }
    std::size_t want = static_cast<std::size_t>(d.data_dim + d.time_embed_dim + d.num_classes + 1);
    if (d.net.input_dim != want || d.net.output_dim != static_cast<std::size_t>(d.data_dim))
        throw DataError("denoiser json: network dimensions inconsistent with header");
    return d;
}

std::string Denoiser::fingerprint() const { return fingerprint_bytes(to_json().dump()); }

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched) {
    if (!x0.same_shape(noise)) throw ContractError("q_sample: noise shape mismatch");
    double ab = sched.alpha_bar(t);
    Tensor out = Tensor::zeros(x0.shape);
    kernels::axpby(std::sqrt(ab), x0.data.data(), std::sqrt(1.0 - ab), noise.data.data(),
                   out.data.data(), out.numel());
    return out;
}

Tensor predict_x0(const Tensor& z_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched) {
    if (!z_t.same_shape(eps_hat)) throw ContractError("predict_x0: eps shape mismatch");
    double ab = sched.alpha_bar(t);
    Tensor out = Tensor::zeros(z_t.shape);
    double inv = 1.0 / std::sqrt(ab);
    kernels::axpby(inv, z_t.data.data(), -std::sqrt(1.0 - ab) * inv, eps_hat.data.data(),
                   out.data.data(), out.numel());
    return out;
}

Var predict_x0(Tape& tape, Var z_t, int t, Var eps_hat, const NoiseSchedule& sched) {
    double ab = sched.alpha_bar(t);
    double inv = 1.0 / std::sqrt(ab);
    return tape.add(tape.scale(z_t, inv), tape.scale(eps_hat, -std::sqrt(1.0 - ab) * inv));
}

Tensor cfg_eps(const Denoiser& den, const Tensor& z, int t, int label, double scale) {
    if (label == kNullLabel) throw ContractError("cfg_eps: label must be conditional");
    if (scale < 0.0) throw ContractError("cfg_eps: scale must be >= 0");
    if (scale == 1.0) return den.eps(z, t, label);
    if (!den.uncond_trained())
        warn("cfg: guidance scale " + std::to_string(scale) +
             " requested but the unconditional branch was never trained (cfg_dropout=0)");
    Tensor eu = den.eps(z, t, kNullLabel);
    if (scale == 0.0) return eu;
    Tensor ec = den.eps(z, t, label);
    Tensor out = Tensor::zeros(eu.shape);
    // eu + s (ec - eu)
    kernels::axpby(1.0 - scale, eu.data.data(), scale, ec.data.data(), out.data.data(), out.numel());
    return out;
}

Var cfg_eps(Tape& tape, const Denoiser& den, Var z, int t, int label, double scale) {
    if (label == kNullLabel) throw ContractError("cfg_eps: label must be conditional");
    if (scale < 0.0) throw ContractError("cfg_eps: scale must be >= 0");
    if (scale == 1.0) return den.eps(tape, z, t, label);
    if (!den.uncond_trained())
        warn("cfg: guidance scale " + std::to_string(scale) +
             " requested but the unconditional branch was never trained (cfg_dropout=0)");
    Var eu = den.eps(tape, z, t, kNullLabel);
    if (scale == 0.0) return eu;
    Var ec = den.eps(tape, z, t, label);
    return tape.add(eu, tape.scale(tape.sub(ec, eu), scale));
}

namespace {

double guarded_sqrt(double radicand, const char* what) {
    if (radicand < 0.0) {
        if (radicand < -1e-12)
            throw NumericalError(std::string("ddim: negative radicand in ") + what + ": " +
                                 std::to_string(radicand));
        radicand = 0.0;
    }
    return std::sqrt(radicand);
}

}  // namespace

Tensor ddim_step(const Tensor& z_t, int t, int t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, double eta, Rng* rng) {
    if (t_prev >= t) throw ContractError("ddim_step: t_prev must be < t");
    if (eta < 0.0) throw ContractError("ddim_step: eta must be >= 0");
    double ab_t = sched.alpha_bar(t);
    double ab_p = sched.alpha_bar(t_prev);
    Tensor x0 = predict_x0(z_t, t, eps_hat, sched);
    double sigma = 0.0;
    if (eta > 0.0) {
        sigma = eta * guarded_sqrt((1.0 - ab_p) / (1.0 - ab_t), "sigma ratio") *
                guarded_sqrt(1.0 - ab_t / ab_p, "sigma step");
    }
    double dir = guarded_sqrt(1.0 - ab_p - sigma * sigma, "direction");
    Tensor out = Tensor::zeros(z_t.shape);
    kernels::axpby(std::sqrt(ab_p), x0.data.data(), dir, eps_hat.data.data(), out.data.data(),
                   out.numel());
    if (sigma > 0.0) {
        if (!rng) throw ContractError("ddim_step: eta > 0 requires an rng");
        for (double& v : out.data) v += sigma * rng->normal();
    }
    out.ensure_finite("ddim_step");
    return out;
}

Tensor ancestral_step(const Tensor& z_next, int t, const EpsFn& psi, const NoiseSchedule& sched,
                      Rng& rng) {
    if (t < 0 || t >= sched.T) throw ContractError("ancestral_step: t out of range");
    double beta = sched.beta(t + 1);
    Tensor net_out = psi(z_next, t + 1);
    if (!net_out.same_shape(z_next)) throw ContractError("ancestral_step: psi shape mismatch");
    Tensor out = Tensor::zeros(z_next.shape);
    kernels::axpby(1.0 + 0.5 * beta, z_next.data.data(), beta, net_out.data.data(),
                   out.data.data(), out.numel());
    if (t > 0) {
        double s = std::sqrt(beta);
        for (double& v : out.data) v += s * rng.normal();
    }
    out.ensure_finite("ancestral_step");
    return out;
}

Tensor sample_ddim(Tensor z, int start_index, const DdimGrid& grid, const EpsFn& eps,
                   const NoiseSchedule& sched, double eta, Rng& rng, const GuidanceHook& hook) {
    if (start_index < 0 || start_index > grid.steps())
        throw ContractError("sample_ddim: start index outside grid");
    for (int i = start_index; i >= 1; --i) {
        if (hook) z = hook(z, i, grid.tau(i));
        Tensor e = eps(z, grid.tau(i));
        z = ddim_step(z, grid.tau(i), grid.tau(i - 1), e, sched, eta, &rng);
    }
    return z;
}

Tensor sample_ancestral(Tensor z, int t_start, const EpsFn& psi, const NoiseSchedule& sched,
                        Rng& rng, const GuidanceHook& hook) {
    if (t_start < 0 || t_start > sched.T) throw ContractError("sample_ancestral: t_start out of range");
    for (int t = t_start; t >= 1; --t) {
        if (hook) z = hook(z, t, t);
        z = ancestral_step(z, t - 1, psi, sched, rng);
    }
    return z;
}

DenoiserTrainResult train_denoiser(const Dataset& data, const NoiseSchedule& sched,
                                   const DenoiserTrainConfig& cfg, std::uint64_t seed) {
    if (data.size() == 0) throw DataError("train_denoiser: empty dataset");
    if (cfg.cfg_dropout < 0.0 || cfg.cfg_dropout >= 1.0)
        throw ConfigError("train_denoiser: cfg_dropout must be in [0,1)");
    int num_classes = data.num_classes();
    std::size_t d = data.d;

    Denoiser den;
    den.num_classes = num_classes;
    den.time_embed_dim = cfg.time_embed_dim;
    den.data_dim = static_cast<int>(d);
    den.T = sched.T;
    den.beta_start = sched.betas.front();
    den.beta_end = sched.betas.back();
    den.cfg_dropout = cfg.cfg_dropout;

    std::size_t in_dim = d + cfg.time_embed_dim + num_classes + 1;
    Rng init_rng(derive_seed(seed, {0x696e6974ULL}));
    den.net = Mlp::create(in_dim, cfg.hidden, d, init_rng);

    Rng order_rng(derive_seed(seed, {0x6f72646572ULL}));
    Rng noise_rng(derive_seed(seed, {0x6e6f697365ULL}));
    Rng drop_rng(derive_seed(seed, {0x64726f70ULL}));

    SgdOptimizer opt(cfg.lr, cfg.momentum);
    auto params = den.net.parameters();

    std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::size_t in_width = in_dim;
    DenoiserTrainResult result;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates over the fixed order stream.
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = order_rng.index(i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            std::size_t bs = std::min<std::size_t>(cfg.batch, n - start);
            Tensor input = Tensor::zeros({bs, in_width});
            Tensor target = Tensor::zeros({bs, d});
            for (std::size_t b = 0; b < bs; ++b) {
                const Sample& s = data.samples[order[start + b]];
                int t = static_cast<int>(noise_rng.index(sched.T)) + 1;
                Tensor x0 = Tensor::vector(s.x);
                Tensor noise = Tensor::zeros({d});
                for (double& v : noise.data) v = noise_rng.normal();
                Tensor z_t = q_sample(x0, t, noise, sched);
                int label = s.y;
                if (cfg.cfg_dropout > 0.0 && drop_rng.uniform() < cfg.cfg_dropout) label = kNullLabel;
                Tensor temb = den.time_embedding(t);
                Tensor lemb = den.label_embedding(label);
                double* row = input.data.data() + b * in_width;
                std::copy_n(z_t.data.data(), d, row);
                std::copy_n(temb.data.data(), temb.numel(), row + d);
                std::copy_n(lemb.data.data(), lemb.numel(), row + d + temb.numel());
                std::copy_n(noise.data.data(), d, target.data.data() + b * d);
            }
            Tape tape;
            Var x = tape.constant(std::move(input));
            std::vector<Var> param_vars;
            Var out = den.net.forward_train(tape, x, param_vars);
            Var diff = tape.sub(out, tape.constant(std::move(target)));
            Var loss = tape.scale(tape.sum(tape.square(diff)), 1.0 / static_cast<double>(bs * d));
            double loss_val = tape.value(loss).scalar_value();
            if (!std::isfinite(loss_val)) {
                std::ostringstream os;
                os << "train_denoiser: non-finite loss at epoch " << epoch << " batch offset "
                   << start << " (lr=" << cfg.lr << ")";
                throw NumericalError(os.str());
            }
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
    result.final_epoch_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
    result.denoiser = std::move(den);
    return result;
}

}  // namespace distdiff
