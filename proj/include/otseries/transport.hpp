#pragma once

#include "otseries/types.hpp"

namespace otseries {

// Entries d(x_i, y_j)^p under the Euclidean ground metric.
struct CostMatrix {
    std::size_t rows = 0, cols = 0;
    double p = 2.0;
    std::vector<double> c; // row-major

    double& at(std::size_t i, std::size_t j) { return c[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return c[i * cols + j]; }
};

CostMatrix cost_matrix(const PointCloud& a, const PointCloud& b, double p);

struct TransportPlan {
    std::size_t rows = 0, cols = 0;
    std::vector<double> lambda; // row-major, total mass 1
    std::vector<double> row_marginal;
    std::vector<double> col_marginal;

    double at(std::size_t i, std::size_t j) const { return lambda[i * cols + j]; }
    double max_marginal_violation() const; // L1, worse of the two sides
};

struct ExactResult {
    double distance = 0.0; // W_p
    TransportPlan plan;
};

// Exact W_p between uniform-weight clouds. Equal sizes go through the
// shortest-augmenting-path assignment solver; unequal sizes through
// successive-shortest-path min-cost flow on the scaled bipartite problem.
ExactResult wasserstein_exact(const PointCloud& a, const PointCloud& b, double p);

// Assignment route alone (n == m), exposed so tests can cross-check it
// against the flow route.
ExactResult wasserstein_assignment(const PointCloud& a, const PointCloud& b, double p);
ExactResult wasserstein_flow(const PointCloud& a, const PointCloud& b, double p);

struct SinkhornParams {
    double epsilon = 1e-3;
    int max_iter = 20000;
    double tol = 1e-5; // L1 marginal violation
};

struct SinkhornResult {
    double distance = 0.0; // sharp: (sum lambda * C)^(1/p)
    TransportPlan plan;
    bool converged = false;
    int iterations = 0;
    std::vector<double> violation_trace; // per-iteration marginal violation
};

// Entropic OT with log-domain stabilization; distance evaluated on the
// regularized plan without the entropy term.
SinkhornResult wasserstein_sinkhorn(const PointCloud& a, const PointCloud& b,
                                    double p, const SinkhornParams& params);

struct DistanceMatrix {
    std::vector<std::string> ids;
    std::vector<double> d; // k x k row-major

    std::size_t size() const { return ids.size(); }
    double& at(std::size_t i, std::size_t j) { return d[i * ids.size() + j]; }
    double at(std::size_t i, std::size_t j) const { return d[i * ids.size() + j]; }
    void validate() const;
};

struct SolverChoice {
    bool exact = true;
    SinkhornParams sinkhorn;              // used when !exact
    bool fail_on_nonconvergence = false;  // throw NonConvergence for any pair
};

struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All k(k-1)/2 pairs; OpenMP over pairs, bit-identical across thread counts.
DistanceMatrix distance_matrix(const std::vector<PointCloud>& clouds,
                               const SolverChoice& solver, double p,
                               int threads = 0);

// Single-threaded reference used by tests and the benchmark.
DistanceMatrix distance_matrix_serial(const std::vector<PointCloud>& clouds,
                                      const SolverChoice& solver, double p);

void write_distance_csv(const std::string& path, const DistanceMatrix& m);
DistanceMatrix read_distance_csv(const std::string& path);

} // namespace otseries
