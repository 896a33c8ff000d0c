#pragma once

#include <vector>

#include "distdiff/tensor.hpp"

namespace distdiff {

// Bottom-up agglomerative clustering with average linkage on Euclidean
// distance, merging until exactly K clusters remain. Ties on merge distance
// go to the pair whose merged member set has the lexicographically smallest
// (min index, max index, members). Returned group indices are numbered by
// each group's smallest member.
std::vector<int> agglomerative_cluster(const Tensor& features, int K);

}  // namespace distdiff
