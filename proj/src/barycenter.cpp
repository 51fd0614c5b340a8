#include "otseries/barycenter.hpp"

#include "otseries/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otseries {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassFloor = 1e-12;

// Per-axis log-kernel and its cost table for the separable squared-Euclidean
// grid cost: c_axis(i, j) = ((i - j) / r)^2.
struct AxisKernel {
    int r;
    std::vector<double> log_k; // r x r, -c/eps
    std::vector<double> cost;  // r x r
};

struct GridKernel {
    std::array<int, 3> res;
    std::array<AxisKernel, 3> axes;
    double epsilon;

    std::size_t bins() const {
        return std::size_t(res[0]) * std::size_t(res[1]) * std::size_t(res[2]);
    }
};

GridKernel make_kernel(std::array<int, 3> res, double epsilon) {
    GridKernel k;
    k.res = res;
    k.epsilon = epsilon;
    for (int a = 0; a < 3; ++a) {
        const int r = res[a];
        k.axes[a].r = r;
        k.axes[a].log_k.resize(std::size_t(r) * r);
        k.axes[a].cost.resize(std::size_t(r) * r);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                const double d = double(i - j) / double(r);
                k.axes[a].cost[std::size_t(i) * r + j] = d * d;
                k.axes[a].log_k[std::size_t(i) * r + j] = -d * d / epsilon;
            }
    }
    return k;
}

// One log-sum-exp sweep along `axis`: out[.., i, ..] = LSE_j(lK[i][j] + in[.., j, ..]).
void sweep_axis(const GridKernel& gk, int axis, const std::vector<double>& in,
                std::vector<double>& out, int threads) {
    const int rx = gk.res[0], ry = gk.res[1], rz = gk.res[2];
    const auto& lk = gk.axes[axis].log_k;
    const int r = gk.axes[axis].r;

    // stride of the swept axis and the set of fibres
    long long stride, n_fibres;
    if (axis == 2) {
        stride = 1;
        n_fibres = (long long)rx * ry;
    } else if (axis == 1) {
        stride = rz;
        n_fibres = (long long)rx * rz;
    } else {
        stride = (long long)ry * rz;
        n_fibres = (long long)ry * rz;
    }

#ifdef _OPENMP
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
    for (long long f = 0; f < n_fibres; ++f) {
        long long base;
        if (axis == 2) base = f * rz;
        else if (axis == 1) base = (f / rz) * (long long)ry * rz + (f % rz);
        else base = f;
        for (int i = 0; i < r; ++i) {
            const double* lki = &lk[std::size_t(i) * r];
            double mx = kNegInf;
            for (int j = 0; j < r; ++j) {
                const double v = lki[j] + in[std::size_t(base + j * stride)];
                if (v > mx) mx = v;
            }
            double s = 0.0;
            if (mx > kNegInf)
                for (int j = 0; j < r; ++j)
                    s += std::exp(lki[j] + in[std::size_t(base + j * stride)] - mx);
            out[std::size_t(base + i * stride)] =
                (mx == kNegInf) ? kNegInf : mx + std::log(s);
        }
    }
    (void)threads;
}

// log(K exp(v)) via three axis sweeps; K is symmetric.
void apply_kernel_log(const GridKernel& gk, const std::vector<double>& v,
                      std::vector<double>& out, std::vector<double>& tmp,
                      int threads) {
    sweep_axis(gk, 2, v, tmp, threads);
    sweep_axis(gk, 1, tmp, out, threads);
    sweep_axis(gk, 0, out, tmp, threads);
    out.swap(tmp);
}

std::vector<double> log_masses(const GridHistogram& h) {
    std::vector<double> out(h.masses.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = h.masses[i] > 0.0 ? std::log(h.masses[i]) : kNegInf;
    return out;
}

double flat_cost(const GridKernel& gk, std::size_t I, std::size_t J) {
    const int ry = gk.res[1], rz = gk.res[2];
    const int iz = int(I % rz), jz = int(J % rz);
    const int iy = int((I / rz) % ry), jy = int((J / rz) % ry);
    const int ix = int(I / (std::size_t(ry) * rz)), jx = int(J / (std::size_t(ry) * rz));
    return gk.axes[0].cost[std::size_t(ix) * gk.res[0] + jx] +
           gk.axes[1].cost[std::size_t(iy) * ry + jy] +
           gk.axes[2].cost[std::size_t(iz) * rz + jz];
}

// Sharp and regularized transport cost between a and b at the kernel's
// epsilon, via a log-domain Sinkhorn on the grid.
struct PairCost {
    double sharp;
    double regularized;
};

PairCost grid_ot_cost(const GridKernel& gk, const GridHistogram& a,
                      const GridHistogram& b, int threads) {
    const std::size_t B = gk.bins();
    const auto la = log_masses(a), lb = log_masses(b);
    std::vector<double> lu(B, 0.0), lv(B, 0.0), kv(B), tmp(B);

    for (int it = 0; it < 500; ++it) {
        apply_kernel_log(gk, lv, kv, tmp, threads);
        for (std::size_t i = 0; i < B; ++i) lu[i] = la[i] - kv[i];
        apply_kernel_log(gk, lu, kv, tmp, threads);
        double viol = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            const double nv = lb[i] - kv[i];
            viol += std::abs(std::exp(nv + kv[i]) - std::exp(lv[i] + kv[i]));
            lv[i] = nv;
        }
        if (viol < 1e-10) break;
    }

    // per-row partials summed serially afterwards so the result is
    // bit-identical for every thread count
    std::vector<double> row_sharp(B, 0.0), row_reg(B, 0.0);
#ifdef _OPENMP
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
    for (long long I = 0; I < (long long)B; ++I) {
        if (lu[std::size_t(I)] == kNegInf) continue;
        double s_loc = 0.0, r_loc = 0.0;
        for (std::size_t J = 0; J < B; ++J) {
            if (lv[J] == kNegInf) continue;
            const double cost = flat_cost(gk, std::size_t(I), J);
            const double ll = lu[std::size_t(I)] + lv[J] - cost / gk.epsilon;
            const double l = std::exp(ll);
            if (l > 0.0) {
                s_loc += l * cost;
                r_loc += l * (ll - 1.0);
            }
        }
        row_sharp[std::size_t(I)] = s_loc;
        row_reg[std::size_t(I)] = r_loc;
    }
    double sharp = 0.0, reg = 0.0;
    for (std::size_t I = 0; I < B; ++I) {
        sharp += row_sharp[I];
        reg += row_reg[I];
    }
    return {sharp, sharp + gk.epsilon * reg};
}

} // namespace

std::array<double, 3> GridHistogram::bin_center(std::size_t flat) const {
    const int ry = resolution[1], rz = resolution[2];
    const int k = int(flat % rz);
    const int j = int((flat / rz) % ry);
    const int i = int(flat / (std::size_t(ry) * rz));
    return {(i + 0.5) / resolution[0], (j + 0.5) / resolution[1],
            (k + 0.5) / resolution[2]};
}

double GridHistogram::total_mass() const {
    return std::accumulate(masses.begin(), masses.end(), 0.0);
}

GridHistogram discretize(const PointCloud& cloud, std::array<int, 3> resolution) {
    for (int r : resolution)
        if (r < 1) throw ArgumentError("discretize: resolution must be >= 1");
    if (cloud.points.empty()) throw ArgumentError("discretize: empty cloud");

    GridHistogram h;
    h.resolution = resolution;
    h.masses.assign(h.bins(), 0.0);
    const double w = 1.0 / double(cloud.size());
    for (const auto& p : cloud.points) {
        std::array<int, 3> idx{};
        for (int a = 0; a < 3; ++a) {
            if (!(p[a] >= 0.0 && p[a] <= 1.0))
                throw ValidationError("discretize: point outside the unit cube");
            idx[a] = std::min(int(p[a] * resolution[a]), resolution[a] - 1);
        }
        h.masses[(std::size_t(idx[0]) * resolution[1] + idx[1]) * resolution[2] +
                 idx[2]] += w;
    }
    return h;
}

BarycenterResult wasserstein_barycenter(const std::vector<GridHistogram>& hists,
                                        const std::vector<double>& weights,
                                        const BarycenterParams& params) {
    if (hists.empty()) throw ArgumentError("barycenter: no input histograms");
    const auto res = hists[0].resolution;
    for (const auto& h : hists)
        if (h.resolution != res)
            throw ValidationError("barycenter: mixed grid resolutions");
    if (weights.size() != hists.size())
        throw ArgumentError("barycenter: weight count mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ArgumentError("barycenter: negative weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw ArgumentError("barycenter: weights must sum to 1");

    const std::size_t N = hists.size();
    const GridKernel gk = make_kernel(res, params.epsilon);
    const std::size_t B = gk.bins();

    std::vector<std::vector<double>> la(N), lv(N, std::vector<double>(B, 0.0));
    std::vector<std::vector<double>> lku(N, std::vector<double>(B));
    for (std::size_t i = 0; i < N; ++i) la[i] = log_masses(hists[i]);

    std::vector<double> lp(B, 0.0), p_prev(B, 1.0 / double(B));
    std::vector<double> lu(B), kv(B), tmp(B);
    std::vector<double> ld(B, 0.0), lkd(B); // debiasing potential, log domain

    int it = 0;
    bool converged = false;
    for (it = 1; it <= params.max_iter; ++it) {
        // debiased Bregman projections: u_i <- a_i / K v_i, p <- d times the
        // geometric mean of K^T u_i, v_i <- p / K^T u_i, then the self-
        // correction d <- sqrt(d p / K d). The correction removes the
        // entropic blur, so identical inputs come back unchanged.
        for (std::size_t i = 0; i < N; ++i) {
            apply_kernel_log(gk, lv[i], kv, tmp, params.threads);
            for (std::size_t x = 0; x < B; ++x) lu[x] = la[i][x] - kv[x];
            apply_kernel_log(gk, lu, lku[i], tmp, params.threads);
        }
        for (std::size_t x = 0; x < B; ++x) lp[x] = ld[x];
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t x = 0; x < B; ++x) lp[x] += weights[i] * lku[i][x];
        // renormalize the iterate to unit mass
        double mx = kNegInf;
        for (double v : lp) mx = std::max(mx, v);
        double se = 0.0;
        for (double v : lp) se += std::exp(v - mx);
        const double lz = mx + std::log(se);
        for (std::size_t x = 0; x < B; ++x) lp[x] -= lz;
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t x = 0; x < B; ++x) lv[i][x] = lp[x] - lku[i][x];
        apply_kernel_log(gk, ld, lkd, tmp, params.threads);
        for (std::size_t x = 0; x < B; ++x)
            ld[x] = 0.5 * (ld[x] + lp[x] - lkd[x]);

        double l1 = 0.0;
        for (std::size_t x = 0; x < B; ++x) {
            const double px = std::exp(lp[x]);
            l1 += std::abs(px - p_prev[x]);
            p_prev[x] = px;
        }
        if (l1 < params.tol) {
            converged = true;
            break;
        }
    }

    BarycenterResult out;
    out.histogram.resolution = res;
    out.histogram.masses = p_prev;
    // floor sub-underflow bins and renormalize
    double total = 0.0;
    for (double& m : out.histogram.masses) {
        if (m < kMassFloor) m = 0.0;
        total += m;
    }
    if (total <= 0.0)
        throw std::runtime_error("barycenter: collapsed to zero mass");
    for (double& m : out.histogram.masses) m /= total;

    out.iterations = std::min(it, params.max_iter);
    out.converged = converged;

    double sharp = 0.0, reg = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const PairCost pc = grid_ot_cost(gk, hists[i], out.histogram, params.threads);
        sharp += weights[i] * pc.sharp;
        reg += weights[i] * pc.regularized;
    }
    out.objective = sharp;
    out.regularized_objective = reg;
    return out;
}

double barycenter_objective(const std::vector<GridHistogram>& hists,
                            const std::vector<double>& weights,
                            const GridHistogram& candidate, double epsilon,
                            int threads) {
    const GridKernel gk = make_kernel(candidate.resolution, epsilon);
    double total = 0.0;
    for (std::size_t i = 0; i < hists.size(); ++i) {
        if (hists[i].resolution != candidate.resolution)
            throw ValidationError("barycenter_objective: mixed grid resolutions");
        total += weights[i] * grid_ot_cost(gk, hists[i], candidate, threads).sharp;
    }
    return total;
}

std::map<int, BarycenterResult> cluster_barycenters(
    const std::vector<PointCloud>& clouds, const Clustering& clustering,
    std::array<int, 3> resolution, const BarycenterParams& params) {
    if (clouds.size() != clustering.ids.size())
        throw ArgumentError("cluster_barycenters: clustering does not cover clouds");
    std::map<int, std::vector<GridHistogram>> members;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        if (clouds[i].city_id != clustering.ids[i])
            throw ArgumentError("cluster_barycenters: cloud/clustering id mismatch");
        members[clustering.labels[i]].push_back(discretize(clouds[i], resolution));
    }
    std::map<int, BarycenterResult> out;
    for (auto& [label, hists] : members) {
        if (hists.size() == 1) {
            BarycenterResult r;
            r.histogram = hists[0];
            r.converged = true;
            r.iterations = 0;
            out.emplace(label, std::move(r));
            continue;
        }
        std::vector<double> w(hists.size(), 1.0 / double(hists.size()));
        out.emplace(label, wasserstein_barycenter(hists, w, params));
    }
    return out;
}

void write_barycenter_csv(const std::string& path, const GridHistogram& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "x,y,z,mass\n";
    for (std::size_t i = 0; i < h.masses.size(); ++i) {
        if (h.masses[i] <= 0.0) continue;
        const auto c = h.bin_center(i);
        out << csv::format_double(c[0]) << ',' << csv::format_double(c[1]) << ','
            << csv::format_double(c[2]) << ',' << csv::format_double(h.masses[i])
            << '\n';
    }
}

} // namespace otseries
