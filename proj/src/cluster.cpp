#include "distdiff/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "distdiff/errors.hpp"
#include "distdiff/kernels.hpp"

namespace distdiff {

namespace {

struct Cluster {
    std::vector<std::size_t> members;  // sorted
    bool alive = true;
};

// (min, max, full member list), lexicographic.
bool key_less(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.front() != b.front()) return a.front() < b.front();
    if (a.back() != b.back()) return a.back() < b.back();
    return a < b;
}

std::vector<std::size_t> merged_members(const Cluster& a, const Cluster& b) {
    std::vector<std::size_t> m;
    m.reserve(a.members.size() + b.members.size());
    std::merge(a.members.begin(), a.members.end(), b.members.begin(), b.members.end(),
               std::back_inserter(m));
    return m;
}

}  // namespace

std::vector<int> agglomerative_cluster(const Tensor& features, int K) {
    if (features.shape.size() != 2) throw ContractError("cluster: features must be (n, d)");
    std::size_t n = features.rows();
    std::size_t d = features.cols();
    if (K < 1) throw ContractError("cluster: K must be >= 1");
    if (static_cast<std::size_t>(K) > n)
        throw DataError("cluster: K=" + std::to_string(K) + " exceeds sample count " +
                        std::to_string(n));

    std::vector<Cluster> clusters(n);
    for (std::size_t i = 0; i < n; ++i) clusters[i].members = {i};

    // Sum of cross-pair distances per cluster pair; average linkage divides by
    // the pair count at comparison time. Sums merge additively, so no linkage
    // value is ever recomputed from scratch.
    std::vector<std::vector<double>> sums(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double* fi = features.data.data() + i * d;
        for (std::size_t j = i + 1; j < n; ++j) {
            double dist = std::sqrt(kernels::sqdist(fi, features.data.data() + j * d, d));
            sums[i][j] = sums[j][i] = dist;
        }
    }

    std::size_t remaining = n;
    while (remaining > static_cast<std::size_t>(K)) {
        double best = 0.0;
        std::size_t bi = n, bj = n;
        std::vector<std::size_t> best_key;
        for (std::size_t i = 0; i < n; ++i) {
            if (!clusters[i].alive) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!clusters[j].alive) continue;
                double cnt = static_cast<double>(clusters[i].members.size()) *
                             static_cast<double>(clusters[j].members.size());
                double avg = sums[i][j] / cnt;
                if (bi == n || avg < best) {
                    best = avg;
                    bi = i;
                    bj = j;
                    best_key = merged_members(clusters[i], clusters[j]);
                } else if (avg == best) {
                    auto key = merged_members(clusters[i], clusters[j]);
                    if (key_less(key, best_key)) {
                        bi = i;
                        bj = j;
                        best_key = std::move(key);
                    }
                }
            }
        }
        // Merge bj into bi (bi holds the smaller min member since slots are
        // scanned in index order and members keep their creation slot).
        clusters[bi].members = std::move(best_key);
        clusters[bj].alive = false;
        for (std::size_t c = 0; c < n; ++c) {
            if (!clusters[c].alive || c == bi) continue;
            sums[bi][c] = sums[c][bi] = sums[bi][c] + sums[bj][c];
        }
        --remaining;
    }

    // Number surviving groups by smallest member.
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < n; ++i)
        if (clusters[i].alive) alive.push_back(i);
    std::sort(alive.begin(), alive.end(),
              [&](std::size_t a, std::size_t b) { return clusters[a].members.front() < clusters[b].members.front(); });
    std::vector<int> assignment(n, -1);
    for (std::size_t g = 0; g < alive.size(); ++g)
        for (std::size_t m : clusters[alive[g]].members) assignment[m] = static_cast<int>(g);
    return assignment;
}

}  // namespace distdiff
