#pragma once

#include "otseries/types.hpp"

namespace otseries {

// Moran's I = (n / sum w) * (sum_ij w_ij z_i z_j) / (sum_i z_i^2), z = x - mean.
double morans_i(const std::vector<double>& x, const SpatialWeights& w);

struct LabelMoranResult {
    std::vector<int> labels_present;   // sorted distinct labels
    std::vector<double> i_values;      // per label, one-hot indicator
    std::vector<double> p_values;      // one-sided permutation p per label
    double weighted_mean_i = 0.0;      // cardinality-weighted headline value
};

// One-hot Moran's I per cluster label with a permutation test:
// p = (1 + #{I_perm >= I_obs}) / (1 + n_perm). Deterministic for a fixed
// seed regardless of thread count (per-permutation RNG streams).
LabelMoranResult morans_i_labels(const Clustering& c, const SpatialWeights& w,
                                 int n_perm, std::uint64_t seed, int threads = 0);

// Row-standardized k-nearest-neighbour weights from coordinates (great-circle
// distance on lat/lon degrees).
SpatialWeights knn_weights(const std::vector<std::string>& ids,
                           const std::vector<double>& lat,
                           const std::vector<double>& lon, int k = 5);

} // namespace otseries
