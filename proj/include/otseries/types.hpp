#pragma once

#include <array>
#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otseries {

using Date = std::chrono::year_month_day;
using Days = std::chrono::sys_days;

// Thrown for malformed input files (missing columns, bad headers).
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when data violates a documented invariant (gaps, negatives, NaN).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown for out-of-range or inconsistent arguments.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline Days to_days(const Date& d) { return std::chrono::sys_days{d}; }

Date parse_date(const std::string& iso);      // "YYYY-MM-DD"
std::string format_date(const Date& d);

// One location's aligned daily series.
struct CityRecord {
    std::string city_id;
    std::string county;
    std::string state;
    std::vector<Date> dates;          // strictly daily, contiguous
    std::vector<double> mobility;     // >= 0
    std::vector<long long> new_cases; // >= 0

    std::size_t length() const { return dates.size(); }
    long long total_cases() const;
};

struct CovariateRow {
    std::string city_id;
    std::optional<Date> stay_at_home_date;
    std::map<std::string, double> covariates; // insertion-free ordered map
};

// Carrier for the Moran's I neighborhood structure.
struct SpatialWeights {
    std::vector<std::string> ids;
    std::vector<double> w; // n x n row-major, zero diagonal
    bool symmetric = true;

    std::size_t size() const { return ids.size(); }
    double& at(std::size_t i, std::size_t j) { return w[i * ids.size() + j]; }
    double at(std::size_t i, std::size_t j) const { return w[i * ids.size() + j]; }
    void validate() const;
};

enum class MobilityVariant { M, DeltaM, Mprime };

const char* variant_name(MobilityVariant v);
MobilityVariant parse_variant(const std::string& s);

// Rank-normalized embedding: n uniform-weight points in the unit cube.
struct PointCloud {
    std::string city_id;
    std::vector<std::array<double, 3>> points;

    std::size_t size() const { return points.size(); }
};

struct Clustering {
    std::vector<std::string> ids;
    std::vector<int> labels; // 1..c, every label present

    int num_clusters() const;
};

} // namespace otseries
