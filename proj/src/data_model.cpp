#include "otseries/data_model.hpp"

#include "otseries/csv.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace otseries {

namespace {

int require_column(const csv::Table& t, const std::string& name,
                   const std::string& path) {
    int idx = t.column(name);
    if (idx < 0)
        throw SchemaError(path + ": missing column '" + name + "'");
    return idx;
}

void validate_record(const CityRecord& r) {
    if (r.length() < 3)
        throw ValidationError("city " + r.city_id + ": fewer than 3 days of data");
    for (std::size_t i = 1; i < r.dates.size(); ++i) {
        auto step = to_days(r.dates[i]) - to_days(r.dates[i - 1]);
        if (step.count() == 0)
            throw ValidationError("city " + r.city_id + ": duplicate date " +
                                  format_date(r.dates[i]));
        if (step.count() != 1)
            throw ValidationError("city " + r.city_id + ": gap before " +
                                  format_date(r.dates[i]));
    }
    for (std::size_t i = 0; i < r.mobility.size(); ++i) {
        if (!std::isfinite(r.mobility[i]) || r.mobility[i] < 0.0)
            throw ValidationError("city " + r.city_id + ": negative mobility on " +
                                  format_date(r.dates[i]));
        if (r.new_cases[i] < 0)
            throw ValidationError("city " + r.city_id + ": negative case count on " +
                                  format_date(r.dates[i]));
    }
}

} // namespace

std::vector<CityRecord> load_timeseries(const std::string& path,
                                        const Date& start, const Date& end) {
    const csv::Table t = csv::read_file(path);
    const int c_id = require_column(t, "city_id", path);
    const int c_county = require_column(t, "county", path);
    const int c_state = require_column(t, "state", path);
    const int c_date = require_column(t, "date", path);
    const int c_mob = require_column(t, "mobility", path);
    const int c_cases = require_column(t, "new_cases", path);

    struct Row {
        Date date;
        double mobility;
        long long cases;
    };
    // city_id -> rows, preserving first-appearance order of cities
    std::vector<std::string> order;
    std::map<std::string, CityRecord> headers;
    std::map<std::string, std::vector<Row>> rows;

    const Days lo = to_days(start), hi = to_days(end);
    for (const auto& r : t.rows) {
        const std::string& id = r[c_id];
        const Date d = parse_date(r[c_date]);
        if (to_days(d) < lo || to_days(d) > hi) continue;
        if (!rows.count(id)) {
            order.push_back(id);
            headers[id] = CityRecord{id, r[c_county], r[c_state], {}, {}, {}};
        }
        double mob;
        long long cases;
        try {
            mob = std::stod(r[c_mob]);
            cases = std::stoll(r[c_cases]);
        } catch (const std::exception&) {
            throw ValidationError(path + ": non-numeric value for city " + id +
                                  " on " + r[c_date]);
        }
        rows[id].push_back({d, mob, cases});
    }

    std::vector<CityRecord> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        auto& rs = rows[id];
        std::sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) {
            return to_days(a.date) < to_days(b.date);
        });
        CityRecord rec = headers[id];
        for (const auto& row : rs) {
            rec.dates.push_back(row.date);
            rec.mobility.push_back(row.mobility);
            rec.new_cases.push_back(row.cases);
        }
        validate_record(rec);
        out.push_back(std::move(rec));
    }
    return out;
}

void emit_timeseries(const std::string& path,
                     const std::vector<CityRecord>& records) {
    csv::Table t;
    t.header = {"city_id", "county", "state", "date", "mobility", "new_cases"};
    for (const auto& r : records)
        for (std::size_t i = 0; i < r.length(); ++i)
            t.rows.push_back({r.city_id, r.county, r.state, format_date(r.dates[i]),
                              csv::format_double(r.mobility[i]),
                              std::to_string(r.new_cases[i])});
    csv::write_file(path, t);
}

std::vector<CovariateRow> load_covariates(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    const int c_id = require_column(t, "city_id", path);
    const int c_date = require_column(t, "stay_at_home_date", path);

    std::vector<CovariateRow> out;
    for (std::size_t ri = 0; ri < t.rows.size(); ++ri) {
        const auto& r = t.rows[ri];
        CovariateRow row;
        row.city_id = r[c_id];
        if (!r[c_date].empty())
            row.stay_at_home_date = parse_date(r[c_date]);
        for (std::size_t ci = 0; ci < t.header.size(); ++ci) {
            if (int(ci) == c_id || int(ci) == c_date) continue;
            try {
                double v = std::stod(r[ci]);
                if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
                row.covariates[t.header[ci]] = v;
            } catch (const std::exception&) {
                throw ValidationError(path + ": non-numeric covariate at row " +
                                      std::to_string(ri + 2) + ", column '" +
                                      t.header[ci] + "'");
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<CityRecord> filter_by_min_cases(const std::vector<CityRecord>& records,
                                            long long threshold) {
    if (threshold < 0) throw ArgumentError("threshold must be >= 0");
    std::vector<CityRecord> out;
    for (const auto& r : records)
        if (r.total_cases() >= threshold) out.push_back(r);
    return out;
}

SpatialWeights load_spatial_weights(const std::string& path,
                                    const std::vector<std::string>& ids) {
    const csv::Table t = csv::read_file(path);
    const int c_src = require_column(t, "src_id", path);
    const int c_dst = require_column(t, "dst_id", path);
    const int c_w = require_column(t, "weight", path);

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;

    SpatialWeights w;
    w.ids = ids;
    w.w.assign(ids.size() * ids.size(), 0.0);
    w.symmetric = true;
    for (const auto& r : t.rows) {
        auto si = index.find(r[c_src]);
        auto di = index.find(r[c_dst]);
        if (si == index.end())
            throw ValidationError(path + ": unknown src_id '" + r[c_src] + "'");
        if (di == index.end())
            throw ValidationError(path + ": unknown dst_id '" + r[c_dst] + "'");
        w.at(si->second, di->second) = std::stod(r[c_w]);
    }
    // edge lists are commonly directed; record asymmetry instead of rejecting
    for (std::size_t i = 0; i < ids.size() && w.symmetric; ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j)
            if (w.at(i, j) != w.at(j, i)) {
                w.symmetric = false;
                break;
            }
    w.validate();
    return w;
}

} // namespace otseries
