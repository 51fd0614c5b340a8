#pragma once

#include "otseries/types.hpp"

namespace otseries {

// Reads `city_id,county,state,date,mobility,new_cases` and returns one
// validated record per city restricted to [start, end]. Cities violating
// the daily-contiguity or non-negativity invariants are rejected with a
// diagnostic naming the city and offending date.
std::vector<CityRecord> load_timeseries(const std::string& path,
                                        const Date& start, const Date& end);

// Writes records back in the same schema (round-trips with load_timeseries).
void emit_timeseries(const std::string& path,
                     const std::vector<CityRecord>& records);

// Reads `city_id,stay_at_home_date,<covariate>...`; an empty date cell means
// no order; unknown columns become additional numeric covariates.
std::vector<CovariateRow> load_covariates(const std::string& path);

// Keeps records whose cumulative new cases >= threshold; stable order.
std::vector<CityRecord> filter_by_min_cases(const std::vector<CityRecord>& records,
                                            long long threshold);

// Reads `src_id,dst_id,weight` into a dense weight matrix over `ids`.
SpatialWeights load_spatial_weights(const std::string& path,
                                    const std::vector<std::string>& ids);

} // namespace otseries
