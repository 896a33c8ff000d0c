#pragma once

#include <vector>

#include "distdiff/errors.hpp"

namespace distdiff {

// Per-step noise coefficients of the forward process. Steps are 1-based;
// alpha_bar(0) == 1 by convention so the final reverse jump lands on clean
// data.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // beta_t at [t-1]
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // running product of alphas

    double beta(int t) const { return betas.at(check(t) - 1); }
    double alpha(int t) const { return alphas.at(check(t) - 1); }
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        return alpha_bars.at(check(t) - 1);
    }

    static NoiseSchedule linear(int T, double beta_start, double beta_end);

private:
    int check(int t) const {
        if (t < 1 || t > T) throw ContractError("schedule: step " + std::to_string(t) + " outside [1," + std::to_string(T) + "]");
        return t;
    }
};

// Strictly increasing sub-sequence 0 = tau_0 < tau_1 < ... < tau_S = T used
// by the DDIM sampler.
struct DdimGrid {
    std::vector<int> taus;

    int steps() const { return static_cast<int>(taus.size()) - 1; }
    int tau(int i) const { return taus.at(static_cast<std::size_t>(i)); }

    static DdimGrid uniform(int T, int steps);
};

}  // namespace distdiff
