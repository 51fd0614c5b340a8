#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "otseries/data_model.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace otseries;
namespace fs = std::filesystem;

namespace {

struct TempFile {
    fs::path path;
    explicit TempFile(const std::string& name, const std::string& content) {
        path = fs::temp_directory_path() / name;
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::error_code ec; fs::remove(path, ec); }
};

std::string two_city_csv(int days, bool drop_a_day = false) {
    std::string s = "city_id,county,state,date,mobility,new_cases\n";
    for (const std::string id : {"A", "B"}) {
        for (int d = 0; d < days; ++d) {
            if (drop_a_day && id == "B" && d == 10) continue;
            char date[16];
            // March has 31 days, April 30, May 31
            int day = d + 1, month = 3;
            if (day > 31) { day -= 31; month = 4; }
            if (month == 4 && day > 30) { day -= 30; month = 5; }
            std::snprintf(date, sizeof(date), "2020-%02d-%02d", month, day);
            s += id + ",County" + id + ",ST," + date + "," +
                 std::to_string(100 + d) + "," + std::to_string(d % 7) + "\n";
        }
    }
    return s;
}

} // namespace

TEST_CASE("load_timeseries parses two cities") {
    TempFile f("ts_ok.csv", two_city_csv(92));
    const auto recs =
        load_timeseries(f.path.string(), parse_date("2020-03-01"),
                        parse_date("2020-05-31"));
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].city_id == "A");
    CHECK(recs[0].length() == 92);
    CHECK(recs[1].length() == 92);
    CHECK(recs[0].state == "ST");
}

TEST_CASE("load_timeseries rejects a gap naming city and date") {
    TempFile f("ts_gap.csv", two_city_csv(30, /*drop_a_day=*/true));
    try {
        load_timeseries(f.path.string(), parse_date("2020-03-01"),
                        parse_date("2020-05-31"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("B") != std::string::npos);
        CHECK(msg.find("2020-03-12") != std::string::npos);
    }
}

TEST_CASE("load_timeseries errors") {
    TempFile missing("ts_missing.csv", "city_id,county,state,date,mobility\nA,C,S,2020-03-01,1\n");
    CHECK_THROWS_AS(load_timeseries(missing.path.string(), parse_date("2020-03-01"),
                                    parse_date("2020-05-31")),
                    SchemaError);
    TempFile negative("ts_neg.csv",
                      "city_id,county,state,date,mobility,new_cases\n"
                      "A,C,S,2020-03-01,1,0\nA,C,S,2020-03-02,-1,0\nA,C,S,2020-03-03,1,0\n");
    CHECK_THROWS_AS(load_timeseries(negative.path.string(), parse_date("2020-03-01"),
                                    parse_date("2020-05-31")),
                    ValidationError);
}

TEST_CASE("timeseries round-trips through the writer") {
    TempFile f("ts_rt.csv", two_city_csv(40));
    const auto recs = load_timeseries(f.path.string(), parse_date("2020-03-01"),
                                      parse_date("2020-05-31"));
    const auto out = fs::temp_directory_path() / "ts_rt_out.csv";
    emit_timeseries(out.string(), recs);
    const auto again = load_timeseries(out.string(), parse_date("2020-03-01"),
                                       parse_date("2020-05-31"));
    REQUIRE(again.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(again[i].city_id == recs[i].city_id);
        CHECK(again[i].dates == recs[i].dates);
        CHECK(again[i].mobility == recs[i].mobility);
        CHECK(again[i].new_cases == recs[i].new_cases);
    }
    fs::remove(out);
}

TEST_CASE("load_covariates handles absent dates and extra columns") {
    TempFile f("cov.csv",
               "city_id,stay_at_home_date,population,custom_extra\n"
               "A,2020-03-19,1000,1.5\n"
               "B,,2000,2.5\n");
    const auto rows = load_covariates(f.path.string());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].stay_at_home_date.has_value());
    CHECK(format_date(*rows[0].stay_at_home_date) == "2020-03-19");
    CHECK_FALSE(rows[1].stay_at_home_date.has_value());
    CHECK(rows[0].covariates.at("custom_extra") == 1.5);
    CHECK(rows[1].covariates.at("population") == 2000);
}

TEST_CASE("load_covariates rejects non-numeric cells with location") {
    TempFile f("cov_bad.csv",
               "city_id,stay_at_home_date,population\nA,2020-03-19,abc\n");
    try {
        load_covariates(f.path.string());
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("population") != std::string::npos);
        CHECK(msg.find("row 2") != std::string::npos);
    }
}

TEST_CASE("filter_by_min_cases boundaries, idempotence, order") {
    auto mk = [](const std::string& id, long long daily) {
        CityRecord r;
        r.city_id = id;
        const Date d0 = parse_date("2020-03-01");
        for (int i = 0; i < 10; ++i) {
            r.dates.push_back(Date{
                std::chrono::sys_days{to_days(d0) + std::chrono::days(i)}});
            r.mobility.push_back(1.0);
            r.new_cases.push_back(daily);
        }
        return r;
    };
    // totals: 999, 1000, 2000
    std::vector<CityRecord> recs;
    {
        auto r = mk("under", 111);
        r.new_cases[9] = 0;  // 999 total
        recs.push_back(r);
    }
    recs.push_back(mk("exact", 100));
    recs.push_back(mk("over", 200));

    const auto kept = filter_by_min_cases(recs, 1000);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].city_id == "exact");
    CHECK(kept[1].city_id == "over");

    const auto again = filter_by_min_cases(kept, 1000);
    REQUIRE(again.size() == kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i)
        CHECK(again[i].city_id == kept[i].city_id);

    CHECK(filter_by_min_cases(recs, 0).size() == 3);
}

TEST_CASE("spatial weights edge list") {
    TempFile f("w.csv", "src_id,dst_id,weight\nA,B,1\nB,A,1\nB,C,0.5\nC,B,0.5\n");
    const auto w = load_spatial_weights(f.path.string(), {"A", "B", "C"});
    CHECK(w.at(0, 1) == 1.0);
    CHECK(w.at(1, 2) == 0.5);
    CHECK(w.at(0, 2) == 0.0);
    CHECK(w.symmetric);
}
