#pragma once

#include "otseries/types.hpp"

#include <map>

namespace otseries {

// Probability masses on a regular grid over the unit cube; bin centers at
// ((i+0.5)/r_x, (j+0.5)/r_y, (k+0.5)/r_z).
struct GridHistogram {
    std::array<int, 3> resolution{1, 1, 1};
    std::vector<double> masses; // x-major: index = (i*ry + j)*rz + k

    std::size_t bins() const {
        return std::size_t(resolution[0]) * std::size_t(resolution[1]) *
               std::size_t(resolution[2]);
    }
    std::array<double, 3> bin_center(std::size_t flat) const;
    double total_mass() const;
};

// Each point contributes 1/n to its containing bin; bins are half-open with
// the last bin closed, so a coordinate of exactly 1.0 lands in the last bin.
GridHistogram discretize(const PointCloud& cloud, std::array<int, 3> resolution);

struct BarycenterParams {
    double epsilon = 0.01; // on squared-Euclidean unit-cube costs
    int max_iter = 1000;
    double tol = 1e-7; // L1 change between successive barycenter iterates
    int threads = 0;
};

struct BarycenterResult {
    GridHistogram histogram;
    double objective = 0.0;             // sharp mean W_2^2 to the inputs
    double regularized_objective = 0.0; // entropic value, logged alongside
    int iterations = 0;
    bool converged = false;
};

// Fixed-support entropic barycenter via iterative Bregman projections in the
// log domain; the squared-Euclidean grid cost factorizes per axis, so kernel
// applications are nested one-axis log-sum-exp sweeps.
BarycenterResult wasserstein_barycenter(const std::vector<GridHistogram>& hists,
                                        const std::vector<double>& weights,
                                        const BarycenterParams& params);

// Mean sharp transport cost from `candidate` to every input, each term an
// entropic OT solve at the same epsilon. Used for objective reporting and
// the best-input comparison.
double barycenter_objective(const std::vector<GridHistogram>& hists,
                            const std::vector<double>& weights,
                            const GridHistogram& candidate, double epsilon,
                            int threads = 0);

// Per-cluster barycenters with uniform member weights; a singleton cluster
// returns its member's histogram unchanged.
std::map<int, BarycenterResult> cluster_barycenters(
    const std::vector<PointCloud>& clouds, const Clustering& clustering,
    std::array<int, 3> resolution, const BarycenterParams& params);

// CSV `x,y,z,mass`, nonzero bins only.
void write_barycenter_csv(const std::string& path, const GridHistogram& h);

} // namespace otseries
