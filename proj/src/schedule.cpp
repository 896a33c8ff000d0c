#include "distdiff/schedule.hpp"

#include <cmath>

namespace distdiff {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("schedule: require 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double frac = static_cast<double>(t) / static_cast<double>(T - 1);
        s.betas[t] = beta_start + (beta_end - beta_start) * frac;
        s.alphas[t] = 1.0 - s.betas[t];
        prod *= s.alphas[t];
        s.alpha_bars[t] = prod;
    }
    // Monotonicity invariants, checked on construction.
    double prev_bar = 1.0;
    for (int t = 0; t < T; ++t) {
        if (t > 0 && s.betas[t] < s.betas[t - 1])
            throw NumericalError("schedule: betas not non-decreasing");
        if (!(s.alpha_bars[t] > 0.0 && s.alpha_bars[t] < 1.0 && s.alpha_bars[t] < prev_bar))
            throw NumericalError("schedule: alpha_bar not strictly decreasing in (0,1)");
        prev_bar = s.alpha_bars[t];
    }
    return s;
}

DdimGrid DdimGrid::uniform(int T, int steps) {
    if (steps < 1 || steps > T) throw ConfigError("ddim grid: steps must be in [1,T]");
    DdimGrid g;
    g.taus.resize(steps + 1);
    for (int i = 0; i <= steps; ++i)
        g.taus[i] = static_cast<int>(std::llround(static_cast<double>(i) * T / steps));
    g.taus[0] = 0;
    g.taus[steps] = T;
    for (int i = 1; i <= steps; ++i) {
        if (g.taus[i] <= g.taus[i - 1])
            throw ConfigError("ddim grid: sub-sequence not strictly increasing");
    }
    return g;
}

}  // namespace distdiff
