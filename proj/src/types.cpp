#include "otseries/types.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace otseries {

Date parse_date(const std::string& iso) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
        throw ValidationError("bad date: '" + iso + "' (expected YYYY-MM-DD)");
    Date date{std::chrono::year{y}, std::chrono::month{unsigned(m)},
              std::chrono::day{unsigned(d)}};
    if (!date.ok()) throw ValidationError("invalid calendar date: '" + iso + "'");
    return date;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(d.year()),
                  unsigned(d.month()), unsigned(d.day()));
    return buf;
}

long long CityRecord::total_cases() const {
    return std::accumulate(new_cases.begin(), new_cases.end(), 0LL);
}

void SpatialWeights::validate() const {
    const std::size_t n = ids.size();
    if (w.size() != n * n)
        throw ValidationError("spatial weights: matrix size mismatch");
    bool any_positive = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (at(i, i) != 0.0)
            throw ValidationError("spatial weights: nonzero diagonal at " + ids[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const double v = at(i, j);
            if (v < 0.0)
                throw ValidationError("spatial weights: negative weight");
            if (v > 0.0) any_positive = true;
            if (symmetric && v != at(j, i))
                throw ValidationError("spatial weights: asymmetric entry not flagged");
        }
    }
    if (!any_positive)
        throw ValidationError("spatial weights: all weights zero");
}

const char* variant_name(MobilityVariant v) {
    switch (v) {
        case MobilityVariant::M: return "M";
        case MobilityVariant::DeltaM: return "DeltaM";
        case MobilityVariant::Mprime: return "Mprime";
    }
    return "?";
}

MobilityVariant parse_variant(const std::string& s) {
    if (s == "M") return MobilityVariant::M;
    if (s == "DeltaM") return MobilityVariant::DeltaM;
    if (s == "Mprime") return MobilityVariant::Mprime;
    throw ArgumentError("unknown mobility variant: '" + s + "'");
}

int Clustering::num_clusters() const {
    int c = 0;
    for (int l : labels) c = std::max(c, l);
    return c;
}

} // namespace otseries
