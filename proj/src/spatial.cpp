#include "otseries/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otseries {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double morans_i_centered(const std::vector<double>& z, double z2_sum,
                         const SpatialWeights& w, double w_sum) {
    const std::size_t n = z.size();
    double cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &w.w[i * n];
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * z[j];
        cross += z[i] * acc;
    }
    return (double(n) / w_sum) * cross / z2_sum;
}

} // namespace

double morans_i(const std::vector<double>& x, const SpatialWeights& w) {
    const std::size_t n = x.size();
    if (n != w.size()) throw ArgumentError("morans_i: size mismatch");
    if (n < 2) throw ArgumentError("morans_i: need at least 2 observations");
    w.validate();

    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(n);
    std::vector<double> z(n);
    double z2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = x[i] - mean;
        z2 += z[i] * z[i];
    }
    if (z2 == 0.0)
        throw ValidationError("morans_i: constant field, statistic undefined");
    const double w_sum = std::accumulate(w.w.begin(), w.w.end(), 0.0);
    return morans_i_centered(z, z2, w, w_sum);
}

LabelMoranResult morans_i_labels(const Clustering& c, const SpatialWeights& w,
                                 int n_perm, std::uint64_t seed, int threads) {
    const std::size_t n = c.labels.size();
    if (n != w.size()) throw ArgumentError("morans_i_labels: size mismatch");
    if (n_perm < 1) throw ArgumentError("morans_i_labels: n_perm must be >= 1");
    w.validate();
    const double w_sum = std::accumulate(w.w.begin(), w.w.end(), 0.0);

    std::set<int> label_set(c.labels.begin(), c.labels.end());
    LabelMoranResult res;
    res.labels_present.assign(label_set.begin(), label_set.end());
    const std::size_t L = res.labels_present.size();
    res.i_values.resize(L);
    res.p_values.resize(L);

    auto indicator_moran = [&](const std::vector<int>& labels, int label) {
        std::size_t count = 0;
        for (int l : labels) count += (l == label);
        const double mean = double(count) / double(n);
        std::vector<double> z(n);
        double z2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = (labels[i] == label ? 1.0 : 0.0) - mean;
            z2 += z[i] * z[i];
        }
        if (z2 == 0.0)
            throw ValidationError("morans_i_labels: a label covers every city");
        return morans_i_centered(z, z2, w, w_sum);
    };

    std::vector<std::vector<int>> exceed(L, std::vector<int>(n_perm, 0));
    for (std::size_t li = 0; li < L; ++li)
        res.i_values[li] = indicator_moran(c.labels, res.labels_present[li]);

#ifdef _OPENMP
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
    for (int perm = 0; perm < n_perm; ++perm) {
        std::mt19937_64 rng(splitmix64(seed ^ (0x5eedULL + std::uint64_t(perm))));
        std::vector<int> shuffled = c.labels;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (std::size_t li = 0; li < L; ++li) {
            const double ip = indicator_moran(shuffled, res.labels_present[li]);
            if (ip >= res.i_values[li]) exceed[li][perm] = 1;
        }
    }

    double weighted = 0.0;
    for (std::size_t li = 0; li < L; ++li) {
        int ge = 0;
        for (int e : exceed[li]) ge += e;
        res.p_values[li] = double(1 + ge) / double(1 + n_perm);
        std::size_t card = 0;
        for (int l : c.labels) card += (l == res.labels_present[li]);
        weighted += double(card) * res.i_values[li];
    }
    res.weighted_mean_i = weighted / double(n);
    return res;
}

SpatialWeights knn_weights(const std::vector<std::string>& ids,
                           const std::vector<double>& lat,
                           const std::vector<double>& lon, int k) {
    const std::size_t n = ids.size();
    if (lat.size() != n || lon.size() != n)
        throw ArgumentError("knn_weights: coordinate count mismatch");
    if (k < 1 || std::size_t(k) >= n)
        throw ArgumentError("knn_weights: k must be in [1, n-1]");

    auto haversine = [](double la1, double lo1, double la2, double lo2) {
        const double rad = M_PI / 180.0;
        const double dlat = (la2 - la1) * rad, dlon = (lo2 - lo1) * rad;
        const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                         std::cos(la1 * rad) * std::cos(la2 * rad) *
                             std::sin(dlon / 2) * std::sin(dlon / 2);
        return 2.0 * std::asin(std::min(1.0, std::sqrt(a)));
    };

    SpatialWeights w;
    w.ids = ids;
    w.w.assign(n * n, 0.0);
    w.symmetric = false; // kNN is directed; row-standardized below
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            d.push_back({haversine(lat[i], lon[i], lat[j], lon[j]), j});
        }
        std::partial_sort(d.begin(), d.begin() + k, d.end());
        for (int m = 0; m < k; ++m) w.at(i, d[std::size_t(m)].second) = 1.0 / k;
    }
    w.validate();
    return w;
}

} // namespace otseries
