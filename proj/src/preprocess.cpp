#include "otseries/preprocess.hpp"

#include "otseries/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace otseries {

std::vector<double> delta_mobility(const std::vector<double>& m) {
    if (m.size() < 2)
        throw ArgumentError("delta_mobility: series shorter than 2");
    std::vector<double> out(m.size() - 1);
    for (std::size_t i = 0; i + 1 < m.size(); ++i) out[i] = m[i + 1] - m[i];
    return out;
}

std::vector<double> local_derivative(const std::vector<double>& m) {
    if (m.size() < 3)
        throw ArgumentError("local_derivative: series shorter than 3");
    std::vector<double> out(m.size() - 2);
    for (std::size_t i = 0; i + 2 < m.size(); ++i)
        out[i] = ((m[i + 1] - m[i]) + 0.5 * (m[i + 2] - m[i])) / 2.0;
    return out;
}

std::vector<double> rank_normalize(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n == 0) throw ArgumentError("rank_normalize: empty series");
    for (double v : x)
        if (std::isnan(v)) throw ValidationError("rank_normalize: NaN input");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    std::vector<double> out(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        // average rank over the tie block [i, j], 1-based ranks
        const double avg_rank = 0.5 * double(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) out[idx[k]] = avg_rank / double(n);
        i = j + 1;
    }
    return out;
}

PointCloud embed_city(const CityRecord& record, MobilityVariant variant) {
    std::vector<double> mob_var;
    std::size_t offset = 0; // index of the first paired date
    switch (variant) {
        case MobilityVariant::M:
            mob_var = record.mobility;
            offset = 0;
            break;
        case MobilityVariant::DeltaM:
            // Eq-1 value at t pairs with N(t): first valid t is index 1
            mob_var = delta_mobility(record.mobility);
            offset = 1;
            break;
        case MobilityVariant::Mprime:
            mob_var = local_derivative(record.mobility);
            offset = 1;
            break;
    }
    const std::size_t n = mob_var.size();

    std::vector<double> cases(n), time(n);
    for (std::size_t i = 0; i < n; ++i) {
        cases[i] = double(record.new_cases[offset + i]);
        time[i] = double(i);
    }

    const auto rx = rank_normalize(mob_var);
    const auto ry = rank_normalize(cases);
    const auto rz = rank_normalize(time);

    PointCloud cloud;
    cloud.city_id = record.city_id;
    cloud.points.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        cloud.points[i] = {rx[i], ry[i], rz[i]};
    return cloud;
}

void dump_cloud_csv(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "x,y,z\n";
    for (const auto& p : cloud.points)
        out << csv::format_double(p[0]) << ',' << csv::format_double(p[1]) << ','
            << csv::format_double(p[2]) << '\n';
}

} // namespace otseries
