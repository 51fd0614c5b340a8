#pragma once

#include "otseries/types.hpp"

namespace otseries {

// First difference: out[i] = m[i+1] - m[i], length len-1.
std::vector<double> delta_mobility(const std::vector<double>& m);

// Smoothed local derivative at interior points:
// out[i] = ((m[i+1]-m[i]) + 0.5*(m[i+2]-m[i])) / 2, length len-2.
std::vector<double> local_derivative(const std::vector<double>& m);

// rank(x[i]) / n with average ranks for ties; values in (0, 1].
std::vector<double> rank_normalize(const std::vector<double>& x);

// Rank-normalized 3-D embedding (variant value, new cases, time).
PointCloud embed_city(const CityRecord& record, MobilityVariant variant);

// Debug dump: CSV `x,y,z`, one row per point.
void dump_cloud_csv(const std::string& path, const PointCloud& cloud);

} // namespace otseries
