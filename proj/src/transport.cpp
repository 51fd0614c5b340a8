#include "otseries/transport.hpp"

#include "otseries/csv.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otseries {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_cloud(const PointCloud& c) {
    if (c.points.empty())
        throw ArgumentError("empty point cloud" +
                            (c.city_id.empty() ? "" : " (" + c.city_id + ")"));
    for (const auto& p : c.points)
        for (double v : p)
            if (!std::isfinite(v))
                throw ValidationError("non-finite coordinate in cloud " + c.city_id);
}

} // namespace

CostMatrix cost_matrix(const PointCloud& a, const PointCloud& b, double p) {
    check_cloud(a);
    check_cloud(b);
    if (p < 1.0) throw ArgumentError("ground-cost exponent p must be >= 1");
    CostMatrix m;
    m.rows = a.size();
    m.cols = b.size();
    m.p = p;
    m.c.resize(m.rows * m.cols);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double d = a.points[i][k] - b.points[j][k];
                s += d * d;
            }
            const double dist = std::sqrt(s);
            m.at(i, j) = (p == 2.0) ? s : (p == 1.0 ? dist : std::pow(dist, p));
        }
    return m;
}

double TransportPlan::max_marginal_violation() const {
    double row_v = 0.0, col_v = 0.0;
    std::vector<double> cs(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            rs += at(i, j);
            cs[j] += at(i, j);
        }
        row_v += std::abs(rs - row_marginal[i]);
    }
    for (std::size_t j = 0; j < cols; ++j) col_v += std::abs(cs[j] - col_marginal[j]);
    return std::max(row_v, col_v);
}

// ---------------------------------------------------------------------------
// Exact solvers
// ---------------------------------------------------------------------------

namespace {

// Shortest-augmenting-path assignment with dual potentials, O(n^3).
// Returns the row assigned to each column.
std::vector<int> solve_assignment(const CostMatrix& c) {
    const int n = int(c.rows);
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_of_col(n);
    for (int j = 1; j <= n; ++j) row_of_col[j - 1] = match[j] - 1;
    return row_of_col;
}

// Dense min-cost max-flow (SPFA-based successive shortest paths) on the
// bipartite transportation graph with integer supplies scaled by n*m.
struct MinCostFlow {
    struct Edge {
        int to;
        long long cap;
        double cost;
        int rev;
    };
    std::vector<std::vector<Edge>> g;

    explicit MinCostFlow(int nodes) : g(nodes) {}

    void add_edge(int from, int to, long long cap, double cost) {
        g[from].push_back({to, cap, cost, int(g[to].size())});
        g[to].push_back({from, 0, -cost, int(g[from].size()) - 1});
    }

    double run(int s, int t, long long flow_target) {
        double total_cost = 0.0;
        const int n = int(g.size());
        while (flow_target > 0) {
            std::vector<double> dist(n, kInf);
            std::vector<int> prev_node(n, -1), prev_edge(n, -1);
            std::vector<char> in_queue(n, 0);
            std::deque<int> q;
            dist[s] = 0.0;
            q.push_back(s);
            in_queue[s] = 1;
            while (!q.empty()) {
                const int u = q.front();
                q.pop_front();
                in_queue[u] = 0;
                for (int ei = 0; ei < int(g[u].size()); ++ei) {
                    const Edge& e = g[u][ei];
                    if (e.cap <= 0) continue;
                    // strict improvement threshold guards against fp cycling
                    if (dist[u] + e.cost < dist[e.to] - 1e-15) {
                        dist[e.to] = dist[u] + e.cost;
                        prev_node[e.to] = u;
                        prev_edge[e.to] = ei;
                        if (!in_queue[e.to]) {
                            q.push_back(e.to);
                            in_queue[e.to] = 1;
                        }
                    }
                }
            }
            if (dist[t] == kInf)
                throw std::runtime_error("min-cost flow: no augmenting path");
            long long push = flow_target;
            for (int v = t; v != s; v = prev_node[v])
                push = std::min(push, g[prev_node[v]][prev_edge[v]].cap);
            for (int v = t; v != s; v = prev_node[v]) {
                Edge& e = g[prev_node[v]][prev_edge[v]];
                e.cap -= push;
                g[v][e.rev].cap += push;
                total_cost += double(push) * e.cost;
            }
            flow_target -= push;
        }
        return total_cost;
    }
};

ExactResult finish_exact(const CostMatrix& c, TransportPlan plan, double p) {
    double cost = 0.0;
    for (std::size_t i = 0; i < c.rows; ++i)
        for (std::size_t j = 0; j < c.cols; ++j)
            cost += plan.at(i, j) * c.at(i, j);
    ExactResult r;
    r.distance = std::pow(std::max(cost, 0.0), 1.0 / p);
    r.plan = std::move(plan);
    return r;
}

} // namespace

ExactResult wasserstein_assignment(const PointCloud& a, const PointCloud& b,
                                   double p) {
    const CostMatrix c = cost_matrix(a, b, p);
    if (c.rows != c.cols)
        throw ArgumentError("assignment route requires equal cloud sizes");
    const std::size_t n = c.rows;
    const auto row_of_col = solve_assignment(c);

    TransportPlan plan;
    plan.rows = plan.cols = n;
    plan.lambda.assign(n * n, 0.0);
    plan.row_marginal.assign(n, 1.0 / double(n));
    plan.col_marginal.assign(n, 1.0 / double(n));
    for (std::size_t j = 0; j < n; ++j)
        plan.lambda[std::size_t(row_of_col[j]) * n + j] = 1.0 / double(n);
    return finish_exact(c, std::move(plan), p);
}

ExactResult wasserstein_flow(const PointCloud& a, const PointCloud& b, double p) {
    const CostMatrix c = cost_matrix(a, b, p);
    const long long n = (long long)c.rows, m = (long long)c.cols;
    // scale uniform weights 1/n, 1/m to integer supplies: each source holds m
    // units, each sink n units; total flow n*m
    const int S = 0, T = 1;
    MinCostFlow mcf(int(2 + n + m));
    for (long long i = 0; i < n; ++i) mcf.add_edge(S, int(2 + i), m, 0.0);
    for (long long j = 0; j < m; ++j) mcf.add_edge(int(2 + n + j), T, n, 0.0);
    for (long long i = 0; i < n; ++i)
        for (long long j = 0; j < m; ++j)
            mcf.add_edge(int(2 + i), int(2 + n + j),
                         std::numeric_limits<long long>::max() / 4,
                         c.at(std::size_t(i), std::size_t(j)));
    mcf.run(S, T, n * m);

    TransportPlan plan;
    plan.rows = std::size_t(n);
    plan.cols = std::size_t(m);
    plan.lambda.assign(std::size_t(n * m), 0.0);
    plan.row_marginal.assign(std::size_t(n), 1.0 / double(n));
    plan.col_marginal.assign(std::size_t(m), 1.0 / double(m));
    const double unit = 1.0 / double(n * m);
    for (long long i = 0; i < n; ++i) {
        for (const auto& e : mcf.g[std::size_t(2 + i)]) {
            if (e.to < 2 + n) continue; // reverse or source edge
            const long long sent =
                std::numeric_limits<long long>::max() / 4 - e.cap;
            if (sent > 0)
                plan.lambda[std::size_t(i) * std::size_t(m) +
                            std::size_t(e.to - 2 - n)] = double(sent) * unit;
        }
    }
    return finish_exact(c, std::move(plan), p);
}

ExactResult wasserstein_exact(const PointCloud& a, const PointCloud& b, double p) {
    if (a.size() == b.size()) return wasserstein_assignment(a, b, p);
    return wasserstein_flow(a, b, p);
}

// ---------------------------------------------------------------------------
// Entropic solver
// ---------------------------------------------------------------------------

namespace {

double logsumexp_row(const double* vals, std::size_t n) {
    double mx = -kInf;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, vals[i]);
    if (mx == -kInf) return -kInf;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(vals[i] - mx);
    return mx + std::log(s);
}

} // namespace

SinkhornResult wasserstein_sinkhorn(const PointCloud& a, const PointCloud& b,
                                    double p, const SinkhornParams& params) {
    if (params.epsilon <= 0.0) throw ArgumentError("sinkhorn: epsilon must be > 0");
    const CostMatrix c = cost_matrix(a, b, p);
    const std::size_t n = c.rows, m = c.cols;
    const double eps = params.epsilon;
    const double la = -std::log(double(n)); // log(1/n)
    const double lb = -std::log(double(m));

    std::vector<double> f(n, 0.0), g(m, 0.0), scratch(std::max(n, m));

    SinkhornResult res;
    res.plan.rows = n;
    res.plan.cols = m;
    res.plan.row_marginal.assign(n, 1.0 / double(n));
    res.plan.col_marginal.assign(m, 1.0 / double(m));

    auto row_violation = [&]() {
        // with g exact, column marginals hold; measure the row side
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j)
                scratch[j] = (f[i] + g[j] - c.at(i, j)) / eps;
            v += std::abs(std::exp(logsumexp_row(scratch.data(), m)) - 1.0 / double(n));
        }
        return v;
    };

    auto iterate = [&](double level_eps) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j)
                scratch[j] = (g[j] - c.at(i, j)) / level_eps;
            f[i] = level_eps * (la - logsumexp_row(scratch.data(), m));
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i)
                scratch[i] = (f[i] - c.at(i, j)) / level_eps;
            g[j] = level_eps * (lb - logsumexp_row(scratch.data(), n));
        }
    };

    // epsilon scaling: anneal from a coarse regularization down to the target,
    // warm-starting the potentials; plain iteration at a small epsilon stalls
    // far above tight tolerances
    int total_it = 0;
    for (double level = 0.5; level > eps * (1.0 + 1e-12); level *= 0.5) {
        for (int k = 0; k < 20 && total_it + 1 < params.max_iter; ++k) {
            iterate(level);
            ++total_it;
        }
    }

    double violation = kInf;
    while (total_it < params.max_iter) {
        iterate(eps);
        ++total_it;
        violation = row_violation();
        res.violation_trace.push_back(violation);
        if (violation < params.tol) break;
    }
    res.iterations = total_it;
    res.converged = violation < params.tol;

    res.plan.lambda.resize(n * m);
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double l = std::exp((f[i] + g[j] - c.at(i, j)) / eps);
            res.plan.lambda[i * m + j] = l;
            cost += l * c.at(i, j);
        }
    res.distance = std::pow(std::max(cost, 0.0), 1.0 / p);
    return res;
}

// ---------------------------------------------------------------------------
// Pairwise matrix
// ---------------------------------------------------------------------------

void DistanceMatrix::validate() const {
    const std::size_t k = ids.size();
    if (d.size() != k * k) throw ValidationError("distance matrix: size mismatch");
    for (std::size_t i = 0; i < k; ++i) {
        if (at(i, i) != 0.0)
            throw ValidationError("distance matrix: nonzero diagonal");
        for (std::size_t j = 0; j < k; ++j) {
            if (at(i, j) < 0.0)
                throw ValidationError("distance matrix: negative entry");
            if (at(i, j) != at(j, i))
                throw ValidationError("distance matrix: asymmetric");
        }
    }
}

namespace {

DistanceMatrix distance_matrix_impl(const std::vector<PointCloud>& clouds,
                                    const SolverChoice& solver, double p,
                                    int threads) {
    if (clouds.size() < 2)
        throw ArgumentError("distance_matrix: need at least 2 clouds");
    const std::size_t k = clouds.size();
    DistanceMatrix dm;
    dm.ids.reserve(k);
    for (const auto& c : clouds) dm.ids.push_back(c.city_id);
    dm.d.assign(k * k, 0.0);

    struct Pair {
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    pairs.reserve(k * (k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) pairs.push_back({i, j});

    std::string first_error;
    bool error_is_nonconvergence = false;
#ifdef _OPENMP
    const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 8) num_threads(nthreads)
#else
    (void)threads;
#endif
    for (long long pi = 0; pi < (long long)pairs.size(); ++pi) {
        const auto [i, j] = pairs[std::size_t(pi)];
        try {
            double dist;
            if (solver.exact) {
                dist = wasserstein_exact(clouds[i], clouds[j], p).distance;
            } else {
                auto r = wasserstein_sinkhorn(clouds[i], clouds[j], p, solver.sinkhorn);
                if (!r.converged && solver.fail_on_nonconvergence)
                    throw NonConvergence("sinkhorn did not converge within " +
                                         std::to_string(solver.sinkhorn.max_iter) +
                                         " iterations");
                dist = r.distance;
            }
            dm.at(i, j) = dist;
            dm.at(j, i) = dist;
        } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (first_error.empty()) {
                    first_error = "pair (" + clouds[i].city_id + ", " +
                                  clouds[j].city_id + "): " + e.what();
                    error_is_nonconvergence =
                        dynamic_cast<const NonConvergence*>(&e) != nullptr;
                }
            }
        }
    }
    if (!first_error.empty()) {
        if (error_is_nonconvergence)
            throw NonConvergence("distance_matrix failed at " + first_error);
        throw std::runtime_error("distance_matrix failed at " + first_error);
    }
    return dm;
}

} // namespace

DistanceMatrix distance_matrix(const std::vector<PointCloud>& clouds,
                               const SolverChoice& solver, double p, int threads) {
    return distance_matrix_impl(clouds, solver, p, threads);
}

DistanceMatrix distance_matrix_serial(const std::vector<PointCloud>& clouds,
                                      const SolverChoice& solver, double p) {
    return distance_matrix_impl(clouds, solver, p, 1);
}

void write_distance_csv(const std::string& path, const DistanceMatrix& m) {
    csv::Table t;
    t.header = m.ids;
    const std::size_t k = m.size();
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<std::string> row(k);
        for (std::size_t j = 0; j < k; ++j) row[j] = csv::format_double(m.at(i, j));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

DistanceMatrix read_distance_csv(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    DistanceMatrix m;
    m.ids = t.header;
    const std::size_t k = m.ids.size();
    if (t.rows.size() != k)
        throw ValidationError(path + ": row count does not match header");
    m.d.resize(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) m.d[i * k + j] = std::stod(t.rows[i][j]);
    m.validate();
    return m;
}

} // namespace otseries
