#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "otseries/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace otseries;

namespace {

CityRecord make_record(std::vector<double> mobility,
                       std::vector<long long> cases) {
    CityRecord r;
    r.city_id = "X";
    r.county = "Test";
    r.state = "TS";
    Date d0 = parse_date("2020-03-01");
    for (std::size_t i = 0; i < mobility.size(); ++i)
        r.dates.push_back(
            Date{std::chrono::sys_days{to_days(d0) + std::chrono::days(int(i))}});
    r.mobility = std::move(mobility);
    r.new_cases = std::move(cases);
    return r;
}

} // namespace

TEST_CASE("delta_mobility direct evaluation") {
    CHECK(delta_mobility({100, 90, 95}) == std::vector<double>{-10, 5});
    CHECK(delta_mobility({5, 5, 5, 5}) == std::vector<double>{0, 0, 0});
    CHECK(delta_mobility({0, 3}) == std::vector<double>{3});
    CHECK_THROWS_AS(delta_mobility({1}), ArgumentError);
}

TEST_CASE("local_derivative direct evaluation") {
    const auto out = local_derivative({100, 90, 95, 95});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(-6.25).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(3.75).epsilon(1e-12));

    CHECK(local_derivative({7, 7, 7, 7, 7}) == std::vector<double>{0, 0, 0});
    CHECK(local_derivative({0, 1, 2, 3}) == std::vector<double>{1, 1});
    CHECK_THROWS_AS(local_derivative({1, 2}), ArgumentError);
}

TEST_CASE("rank_normalize basics and ties") {
    const auto a = rank_normalize({5, 1, 3});
    CHECK(a[0] == doctest::Approx(1.0));
    CHECK(a[1] == doctest::Approx(1.0 / 3));
    CHECK(a[2] == doctest::Approx(2.0 / 3));

    const auto b = rank_normalize({2, 2, 5});
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(b[1] == doctest::Approx(0.5));
    CHECK(b[2] == doctest::Approx(1.0));

    const auto c = rank_normalize({1, 2, 3, 4, 5});
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(c[i] == doctest::Approx(double(i + 1) / 5));

    CHECK_THROWS_AS(rank_normalize({1.0, std::nan("")}), ValidationError);
    CHECK_THROWS_AS(rank_normalize({}), ArgumentError);
}

TEST_CASE("embed_city lengths and time column") {
    const auto rec = make_record({1, 4, 2, 9}, {3, 1, 4, 1});
    const auto cloud = embed_city(rec, MobilityVariant::M);
    REQUIRE(cloud.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(cloud.points[i][2] == doctest::Approx(double(i + 1) / 4));

    std::vector<double> mob(92), koefs;
    std::vector<long long> cases(92);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 10);
    for (std::size_t i = 0; i < 92; ++i) {
        mob[i] = u(rng);
        cases[i] = (long long)(u(rng) * 10);
    }
    const auto rec92 = make_record(mob, cases);
    CHECK(embed_city(rec92, MobilityVariant::Mprime).size() == 90);
    CHECK(embed_city(rec92, MobilityVariant::DeltaM).size() == 91);
}

TEST_CASE("embed_city constant cases column hits the tie average") {
    const auto rec = make_record({1, 4, 2, 9, 5}, {7, 7, 7, 7, 7});
    const auto cloud = embed_city(rec, MobilityVariant::M);
    const std::size_t n = cloud.size();
    for (const auto& p : cloud.points)
        CHECK(p[1] == doctest::Approx(double(n + 1) / (2.0 * double(n))));
}

TEST_CASE("monotone invariance of the embedding") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    std::vector<double> mob(30);
    std::vector<long long> cases(30);
    for (auto& m : mob) m = u(rng);
    for (auto& c : cases) c = (long long)u(rng);

    const auto base = embed_city(make_record(mob, cases), MobilityVariant::M);
    // strictly increasing transform of the raw mobility
    std::vector<double> mob2(30);
    for (std::size_t i = 0; i < 30; ++i) mob2[i] = std::exp(mob[i] / 25.0);
    const auto transformed = embed_city(make_record(mob2, cases), MobilityVariant::M);
    for (std::size_t i = 0; i < base.size(); ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(base.points[i][k] == doctest::Approx(transformed.points[i][k]));
}

TEST_CASE("embedded coordinates lie in (0,1] and match rank multiset") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> mob(25);
    std::vector<long long> cases(25);
    for (auto& m : mob) m = u(rng);
    for (auto& c : cases) c = (long long)(u(rng) * 3);
    const auto cloud = embed_city(make_record(mob, cases), MobilityVariant::DeltaM);
    for (const auto& p : cloud.points)
        for (int k = 0; k < 3; ++k) {
            CHECK(p[k] > 0.0);
            CHECK(p[k] <= 1.0);
        }
    // per-column multiset equals the average-rank multiset of the raw column
    const auto dm = delta_mobility(mob);
    auto expected = rank_normalize(dm);
    std::vector<double> actual;
    for (const auto& p : cloud.points) actual.push_back(p[0]);
    std::sort(expected.begin(), expected.end());
    std::sort(actual.begin(), actual.end());
    for (std::size_t i = 0; i < actual.size(); ++i)
        CHECK(actual[i] == doctest::Approx(expected[i]));
}
