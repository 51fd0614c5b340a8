// Timing comparison of the OpenMP kernels against their serial paths:
// pairwise OT distance matrix, Sinkhorn distances, grid barycenters and
// forest training.

#include "otseries/barycenter.hpp"
#include "otseries/forest.hpp"
#include "otseries/spatial.hpp"
#include "otseries/transport.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace otseries;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<PointCloud> random_clouds(int k, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<PointCloud> clouds{std::size_t(k)};
    for (int c = 0; c < k; ++c) {
        clouds[std::size_t(c)].city_id = "c" + std::to_string(c);
        clouds[std::size_t(c)].points.resize(std::size_t(n));
        for (auto& p : clouds[std::size_t(c)].points)
            p = {u(rng), u(rng), u(rng)};
    }
    return clouds;
}

template <typename F>
double time_once(F&& f) {
    const double t0 = now_s();
    f();
    return now_s() - t0;
}

} // namespace

int main() {
#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    std::printf("max threads: %d\n\n", max_threads);

    {
        const auto clouds = random_clouds(48, 60, 7);
        SolverChoice exact;
        double d_serial = 0, d_par = 0;
        DistanceMatrix m1, m2;
        d_serial = time_once([&] { m1 = distance_matrix_serial(clouds, exact, 2.0); });
        d_par = time_once([&] { m2 = distance_matrix(clouds, exact, 2.0); });
        double max_diff = 0;
        for (std::size_t i = 0; i < m1.d.size(); ++i)
            max_diff = std::max(max_diff, std::abs(m1.d[i] - m2.d[i]));
        std::printf("exact distance matrix (48 clouds x 60 pts): serial %.3fs, "
                    "parallel %.3fs, speedup %.2fx, max diff %g\n",
                    d_serial, d_par, d_serial / d_par, max_diff);
    }

    {
        const auto clouds = random_clouds(32, 48, 11);
        SolverChoice sk;
        sk.exact = false;
        sk.sinkhorn = {1e-2, 5000, 1e-8};
        DistanceMatrix m1, m2;
        const double d_serial =
            time_once([&] { m1 = distance_matrix_serial(clouds, sk, 2.0); });
        const double d_par = time_once([&] { m2 = distance_matrix(clouds, sk, 2.0); });
        double max_diff = 0;
        for (std::size_t i = 0; i < m1.d.size(); ++i)
            max_diff = std::max(max_diff, std::abs(m1.d[i] - m2.d[i]));
        std::printf("sinkhorn distance matrix (32 clouds x 48 pts): serial %.3fs, "
                    "parallel %.3fs, speedup %.2fx, max diff %g\n",
                    d_serial, d_par, d_serial / d_par, max_diff);
    }

    {
        const auto clouds = random_clouds(8, 80, 13);
        std::vector<GridHistogram> hists;
        for (const auto& c : clouds) hists.push_back(discretize(c, {12, 12, 12}));
        std::vector<double> w(hists.size(), 1.0 / double(hists.size()));
        BarycenterParams bp;
        bp.epsilon = 0.01;
        bp.max_iter = 200;
        BarycenterResult r1, r2;
        bp.threads = 1;
        const double d_serial = time_once([&] { r1 = wasserstein_barycenter(hists, w, bp); });
        bp.threads = 0;
        const double d_par = time_once([&] { r2 = wasserstein_barycenter(hists, w, bp); });
        double max_diff = 0;
        for (std::size_t i = 0; i < r1.histogram.masses.size(); ++i)
            max_diff = std::max(max_diff, std::abs(r1.histogram.masses[i] -
                                                   r2.histogram.masses[i]));
        std::printf("barycenter (8 hists, 12^3 grid): serial %.3fs, parallel "
                    "%.3fs, speedup %.2fx, max diff %g\n",
                    d_serial, d_par, d_serial / d_par, max_diff);
    }

    {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t n = 300, f = 12;
        FeatureTable ft;
        Clustering c;
        for (std::size_t j = 0; j < f; ++j)
            ft.feature_names.push_back("f" + std::to_string(j));
        for (std::size_t i = 0; i < n; ++i) {
            ft.ids.push_back("c" + std::to_string(i));
            c.ids.push_back(ft.ids.back());
            for (std::size_t j = 0; j < f; ++j) ft.values.push_back(u(rng));
            c.labels.push_back(1 + int(i % 4));
        }
        ForestParams fp;
        fp.n_trees = 300;
        fp.seed = 5;
        ForestModel m1, m2;
        fp.threads = 1;
        const double d_serial = time_once([&] { m1 = train_forest(ft, c, fp); });
        fp.threads = 0;
        const double d_par = time_once([&] { m2 = train_forest(ft, c, fp); });
        std::printf("forest training (300 trees, n=300, f=12): serial %.3fs, "
                    "parallel %.3fs, speedup %.2fx, oob diff %g\n",
                    d_serial, d_par, d_serial / d_par,
                    std::abs(m1.oob_accuracy - m2.oob_accuracy));
    }

    return 0;
}
