#include "distdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "distdiff/errors.hpp"
#include "distdiff/kernels.hpp"
#include "distdiff/log.hpp"

namespace distdiff {

namespace {

constexpr double kPsdTolerance = -1e-8;

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
    return m;
}

// Symmetric PSD square root; eigenvalues slightly below zero are clamped,
// anything beyond the tolerance is an error.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success) throw NumericalError("frechet: eigendecomposition failed");
    Eigen::VectorXd vals = eig.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) {
        if (vals[i] < kPsdTolerance)
            throw NumericalError("frechet: non-PSD intermediate, eigenvalue " +
                                 std::to_string(vals[i]));
        vals[i] = std::sqrt(std::max(vals[i], 0.0));
    }
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

double trace_sqrt_product(const Tensor& cov_a, const Tensor& cov_b) {
    std::size_t d = cov_a.rows();
    if (d == 1) {
        double p = cov_a.data[0] * cov_b.data[0];
        if (p < kPsdTolerance) throw NumericalError("frechet: negative variance product");
        return std::sqrt(std::max(p, 0.0));
    }
    if (d == 2) {
        // Closed form: eigenvalues of the 2x2 product have
        // sqrt(l1) + sqrt(l2) = sqrt(trace + 2 sqrt(det)).
        double t = cov_a.at(0, 0) * cov_b.at(0, 0) + cov_a.at(0, 1) * cov_b.at(1, 0) +
                   cov_a.at(1, 0) * cov_b.at(0, 1) + cov_a.at(1, 1) * cov_b.at(1, 1);
        double det_a = cov_a.at(0, 0) * cov_a.at(1, 1) - cov_a.at(0, 1) * cov_a.at(1, 0);
        double det_b = cov_b.at(0, 0) * cov_b.at(1, 1) - cov_b.at(0, 1) * cov_b.at(1, 0);
        double det = det_a * det_b;
        if (det < kPsdTolerance) throw NumericalError("frechet: negative determinant product");
        double inner = t + 2.0 * std::sqrt(std::max(det, 0.0));
        if (inner < kPsdTolerance) throw NumericalError("frechet: negative trace radicand");
        return std::sqrt(std::max(inner, 0.0));
    }
    // Symmetric product form: tr((A B)^1/2) = tr((A^1/2 B A^1/2)^1/2).
    Eigen::MatrixXd a = to_eigen(cov_a);
    Eigen::MatrixXd b = to_eigen(cov_b);
    Eigen::MatrixXd a_half = psd_sqrt(0.5 * (a + a.transpose()));
    Eigen::MatrixXd m = a_half * b * a_half;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("frechet: eigendecomposition failed");
    double tr = 0.0;
    for (int i = 0; i < eig.eigenvalues().size(); ++i) {
        double v = eig.eigenvalues()[i];
        if (v < kPsdTolerance)
            throw NumericalError("frechet: non-PSD intermediate, eigenvalue " + std::to_string(v));
        tr += std::sqrt(std::max(v, 0.0));
    }
    return tr;
}

struct Moments {
    Tensor mu;   // (d)
    Tensor cov;  // (d,d)
};

Moments gaussian_fit(const Tensor& x) {
    std::size_t n = x.rows(), d = x.cols();
    if (n < 2) throw DataError("frechet: need at least 2 samples");
    Moments m;
    m.mu = Tensor::zeros({d});
    for (std::size_t i = 0; i < n; ++i)
        kernels::add(m.mu.data.data(), x.data.data() + i * d, m.mu.data.data(), d);
    kernels::scale(1.0 / static_cast<double>(n), m.mu.data.data(), m.mu.data.data(), d);
    m.cov = Tensor::zeros({d, d});
    std::vector<double> centered(n * d);
    for (std::size_t i = 0; i < n; ++i)
        kernels::sub(x.data.data() + i * d, m.mu.data.data(), centered.data() + i * d, d);
    kernels::matmul_at_b(centered.data(), centered.data(), m.cov.data.data(), n, d, d);
    kernels::scale(1.0 / static_cast<double>(n - 1), m.cov.data.data(), m.cov.data.data(), d * d);
    if (n < d + 1) {
        for (std::size_t i = 0; i < d; ++i) m.cov.at(i, i) += 1e-6;
    }
    return m;
}

}  // namespace

double frechet_gaussian(const Tensor& mu_a, const Tensor& cov_a, const Tensor& mu_b,
                        const Tensor& cov_b) {
    if (!mu_a.same_shape(mu_b) || !cov_a.same_shape(cov_b) || cov_a.rows() != cov_a.cols() ||
        cov_a.rows() != mu_a.numel())
        throw ContractError("frechet: inconsistent moment shapes");
    std::size_t d = mu_a.numel();
    double mean_term = kernels::sqdist(mu_a.data.data(), mu_b.data.data(), d);
    double tr_a = 0.0, tr_b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        tr_a += cov_a.at(i, i);
        tr_b += cov_b.at(i, i);
    }
    double fd = mean_term + tr_a + tr_b - 2.0 * trace_sqrt_product(cov_a, cov_b);
    if (fd < kPsdTolerance) throw NumericalError("frechet: negative distance " + std::to_string(fd));
    return std::max(fd, 0.0);
}

double frechet_distance(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ContractError("frechet: dimension mismatch");
    Moments ma = gaussian_fit(a);
    Moments mb = gaussian_fit(b);
    return frechet_gaussian(ma.mu, ma.cov, mb.mu, mb.cov);
}

double mmd2(const Tensor& a, const Tensor& b, double bandwidth) {
    std::size_t m = a.rows(), n = b.rows(), d = a.cols();
    if (b.cols() != d) throw ContractError("mmd2: dimension mismatch");
    if (m < 2 || n < 2) throw DataError("mmd2: need at least 2 samples per set");

    double sigma = bandwidth;
    if (sigma <= 0.0) {
        // Median pairwise distance over the pooled set, self-pairs excluded.
        std::vector<double> dists;
        std::size_t total = m + n;
        auto point = [&](std::size_t i) {
            return i < m ? a.data.data() + i * d : b.data.data() + (i - m) * d;
        };
        dists.reserve(total * (total - 1) / 2);
        for (std::size_t i = 0; i < total; ++i)
            for (std::size_t j = i + 1; j < total; ++j)
                dists.push_back(std::sqrt(kernels::sqdist(point(i), point(j), d)));
        std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
        sigma = dists[dists.size() / 2];
        if (sigma <= 0.0)
            throw NumericalError("mmd2: degenerate bandwidth 0 (all points identical)");
    }
    double gamma = 1.0 / (2.0 * sigma * sigma);

    auto kernel_sum = [&](const Tensor& x, const Tensor& y) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < y.rows(); ++j)
                s += std::exp(-gamma * kernels::sqdist(x.data.data() + i * d,
                                                       y.data.data() + j * d, d));
        return s;
    };

    double t_aa = kernel_sum(a, a) / (static_cast<double>(m) * m);
    double t_bb = kernel_sum(b, b) / (static_cast<double>(n) * n);
    double t_ab = kernel_sum(a, b) / (static_cast<double>(m) * n);
    return t_aa + t_bb - 2.0 * t_ab;
}

DownstreamResult downstream_eval(const Dataset& train, const Dataset& test,
                                 const DownstreamConfig& cfg,
                                 const std::vector<std::uint64_t>& seeds) {
    if (train.d != test.d) throw DataError("downstream: dimension mismatch");
    int nc_test = test.num_classes();
    int nc_train = train.num_classes();
    int nc = std::max(nc_test, nc_train);
    for (int c = 0; c < nc; ++c) {
        if (train.class_indices(c).empty())
            warn("downstream: class " + std::to_string(c) + " absent from training set");
    }
    if (seeds.empty()) throw ConfigError("downstream: need at least one seed");

    ExtractorTrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch = cfg.batch;
    tc.lr = cfg.lr;
    tc.momentum = cfg.momentum;
    tc.hidden = cfg.hidden;

    DownstreamResult out;
    for (std::uint64_t s : seeds) {
        // The classifier shares the extractor's family but is always freshly
        // initialised; the guidance extractor itself is never evaluated.
        ExtractorTrainResult r = train_extractor(train, tc, s);
        out.per_seed.push_back(classify_accuracy(r.extractor.net, test));
    }
    double sum = std::accumulate(out.per_seed.begin(), out.per_seed.end(), 0.0);
    out.mean = sum / static_cast<double>(out.per_seed.size());
    if (out.per_seed.size() > 1) {
        double ss = 0.0;
        for (double v : out.per_seed) ss += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(out.per_seed.size() - 1));
    }
    return out;
}

namespace {

Tensor subsample(const Tensor& x, int max_samples, Rng& rng) {
    std::size_t n = x.rows(), d = x.cols();
    if (max_samples <= 0 || n <= static_cast<std::size_t>(max_samples)) return x;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    idx.resize(max_samples);
    Tensor out = Tensor::zeros({static_cast<std::size_t>(max_samples), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(x.data.data() + idx[i] * d, d, out.data.data() + i * d);
    return out;
}

}  // namespace

MetricReport alignment_report(const Dataset& real, const Dataset& synth,
                              const FeatureExtractor* extractor, const PrototypeSet* prototypes,
                              const AlignmentOptions& opts) {
    if (real.d != synth.d) throw DataError("alignment: dimension mismatch");
    MetricReport rep;
    rep.n_real = real.size();
    rep.n_synth = synth.size();
    rep.seed = opts.seed;

    Tensor xa = real.features();
    Tensor xb = synth.features();
    if (opts.feature_space) {
        if (!extractor) throw ConfigError("alignment: feature space requested without an extractor");
        xa = extractor->features(xa);
        xb = extractor->features(xb);
        rep.space = "feature";
    } else {
        rep.space = "raw";
    }
    Rng rng_a(derive_seed(opts.seed, {0x616c69676e41ULL}));
    Rng rng_b(derive_seed(opts.seed, {0x616c69676e42ULL}));
    Tensor sa = subsample(xa, opts.max_samples, rng_a);
    Tensor sb = subsample(xb, opts.max_samples, rng_b);
    rep.frechet = frechet_distance(sa, sb);
    rep.mmd2 = mmd2(sa, sb, opts.mmd_bandwidth);

    if (extractor && prototypes) {
        Tensor feats = extractor->features(synth.features());
        double sum_dc = 0.0, sum_dg = 0.0;
        std::size_t counted = 0;
        std::size_t fd = feats.cols();
        for (std::size_t i = 0; i < synth.size(); ++i) {
            int y = synth.samples[i].y;
            auto it = prototypes->classes.find(y);
            if (it == prototypes->classes.end()) continue;
            Tensor f({fd}, std::vector<double>(feats.data.begin() + i * fd,
                                               feats.data.begin() + (i + 1) * fd));
            sum_dc += dist_class(f, it->second.p_c);
            sum_dg += dist_group(f, it->second.p_g).first;
            ++counted;
        }
        if (counted) {
            rep.mean_dc = sum_dc / static_cast<double>(counted);
            rep.mean_dg = sum_dg / static_cast<double>(counted);
        }
    }
    return rep;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["frechet"] = frechet;
    j["mmd2"] = mmd2;
    j["space"] = space;
    j["n_real"] = n_real;
    j["n_synth"] = n_synth;
    j["seed"] = seed;
    if (mean_dc) j["mean_dc"] = *mean_dc;
    if (mean_dg) j["mean_dg"] = *mean_dg;
    auto downstream = nlohmann::json::object();
    if (acc_original) {
        downstream["acc_original"] = {{"mean", acc_original->mean},
                                      {"sd", acc_original->sd},
                                      {"per_seed", acc_original->per_seed}};
    }
    if (acc_expanded) {
        downstream["acc_expanded"] = {{"mean", acc_expanded->mean},
                                      {"sd", acc_expanded->sd},
                                      {"per_seed", acc_expanded->per_seed}};
    }
    if (delta) downstream["delta"] = *delta;
    if (!downstream.empty()) j["downstream"] = std::move(downstream);
    return j;
}

}  // namespace distdiff
