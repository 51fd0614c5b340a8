#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "otseries/forest.hpp"

#include <cmath>
#include <random>

using namespace otseries;

namespace {

// n samples, f features; labels determined by feature 0 unless `random_labels`
struct Toy {
    FeatureTable ft;
    Clustering c;
};

Toy make_toy(std::size_t n, std::size_t f, std::uint64_t seed,
             bool random_labels = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Toy t;
    for (std::size_t j = 0; j < f; ++j)
        t.ft.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        t.ft.ids.push_back("c" + std::to_string(i));
        t.c.ids.push_back(t.ft.ids.back());
        std::vector<double> row(f);
        for (std::size_t j = 0; j < f; ++j) row[j] = u(rng);
        for (double v : row) t.ft.values.push_back(v);
        t.c.labels.push_back(random_labels ? 1 + int(rng() % 2)
                                           : (row[0] > 0.5 ? 2 : 1));
    }
    // both labels must occur
    t.c.labels[0] = 1;
    t.c.labels[1] = 2;
    return t;
}

} // namespace

TEST_CASE("reaction_time fixtures") {
    const Date ref = parse_date("2020-03-15");
    CHECK(reaction_time(parse_date("2020-03-19"), ref) == 4);
    CHECK(reaction_time(parse_date("2020-04-04"), ref) == 20);
    CHECK(reaction_time(std::nullopt, ref) == 85);
}

TEST_CASE("reaction_time translation consistency") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const int base_off = int(rng() % 60);
        const int shift = int(rng() % 200) - 100;
        const Date ref = parse_date("2020-03-15");
        const Date order{std::chrono::sys_days{to_days(ref) +
                                               std::chrono::days(base_off)}};
        const Date ref2{std::chrono::sys_days{to_days(ref) +
                                              std::chrono::days(shift)}};
        const Date order2{std::chrono::sys_days{to_days(order) +
                                                std::chrono::days(shift)}};
        CHECK(reaction_time(order, ref) == reaction_time(order2, ref2));
    }
}

TEST_CASE("perfectly separable data trains to accuracy 1") {
    const auto toy = make_toy(60, 2, 3);
    ForestParams p;
    p.n_trees = 50;
    p.seed = 1;
    const auto model = train_forest(toy.ft, toy.c, p);
    for (std::size_t i = 0; i < toy.ft.n(); ++i)
        CHECK(model.predict(&toy.ft.values[i * toy.ft.f()]) == toy.c.labels[i]);
    CHECK(model.oob_accuracy > 0.9);
}

TEST_CASE("labels independent of features: OOB near the majority rate") {
    const auto toy = make_toy(120, 4, 5, /*random_labels=*/true);
    std::size_t majority = 0;
    for (int l : toy.c.labels) majority += (l == 1);
    majority = std::max(majority, toy.c.labels.size() - majority);
    const double majority_rate = double(majority) / double(toy.c.labels.size());

    ForestParams p;
    p.n_trees = 100;
    p.seed = 7;
    const auto model = train_forest(toy.ft, toy.c, p);
    CHECK(model.oob_accuracy < majority_rate + 0.12);
}

TEST_CASE("single informative feature dominates root splits") {
    const auto toy = make_toy(100, 4, 9);
    ForestParams p;
    p.n_trees = 200;
    p.seed = 11;
    const auto model = train_forest(toy.ft, toy.c, p);
    int informative_roots = 0, split_roots = 0;
    for (const auto& t : model.trees) {
        if (t.nodes[0].feature < 0) continue;
        ++split_roots;
        // mtry = 2 of 4 features: the informative one dominates when offered
        informative_roots += t.nodes[0].feature == 0;
    }
    // feature 0 is offered in roughly half the roots and should win nearly
    // every time it is offered
    CHECK(double(informative_roots) / double(split_roots) > 0.4);
}

TEST_CASE("forest training is bit-reproducible for a fixed seed") {
    const auto toy = make_toy(60, 3, 13);
    ForestParams p;
    p.n_trees = 40;
    p.seed = 21;
    p.threads = 1;
    const auto m1 = train_forest(toy.ft, toy.c, p);
    p.threads = 8;
    const auto m2 = train_forest(toy.ft, toy.c, p);
    CHECK(m1.oob_accuracy == m2.oob_accuracy);
    REQUIRE(m1.trees.size() == m2.trees.size());
    for (std::size_t t = 0; t < m1.trees.size(); ++t) {
        REQUIRE(m1.trees[t].nodes.size() == m2.trees[t].nodes.size());
        for (std::size_t n = 0; n < m1.trees[t].nodes.size(); ++n) {
            CHECK(m1.trees[t].nodes[n].feature == m2.trees[t].nodes[n].feature);
            CHECK(m1.trees[t].nodes[n].threshold == m2.trees[t].nodes[n].threshold);
        }
    }
}

TEST_CASE("shapley: ignored feature has zero attribution") {
    auto toy = make_toy(60, 2, 17);
    // add a feature the model never sees benefit from: constant column
    toy.ft.feature_names.push_back("dead");
    FeatureTable ft2;
    ft2.ids = toy.ft.ids;
    ft2.feature_names = toy.ft.feature_names;
    for (std::size_t i = 0; i < toy.ft.n(); ++i) {
        ft2.values.push_back(toy.ft.at(i, 0));
        ft2.values.push_back(toy.ft.at(i, 1));
        ft2.values.push_back(0.5);
    }
    ForestParams p;
    p.n_trees = 50;
    p.seed = 23;
    const auto model = train_forest(ft2, toy.c, p);
    std::vector<double> x(&ft2.values[0], &ft2.values[3]);
    const auto phi = shapley_values_instance(model, ft2, x, toy.c.labels[0],
                                             2000, 31);
    CHECK(std::abs(phi[2]) <= 0.01);
}

TEST_CASE("shapley efficiency on a seeded toy model") {
    const auto toy = make_toy(50, 3, 19);
    ForestParams p;
    p.n_trees = 60;
    p.seed = 29;
    const auto model = train_forest(toy.ft, toy.c, p);

    const std::size_t idx = 4;
    std::vector<double> x(&toy.ft.values[idx * toy.ft.f()],
                          &toy.ft.values[(idx + 1) * toy.ft.f()]);
    const int cls = toy.c.labels[idx];
    const int n_samples = 2000;
    const auto phi =
        shapley_values_instance(model, toy.ft, x, cls, n_samples, 37);

    const double fx = model.vote_shares(x.data())[std::size_t(cls - 1)];
    double bg = 0.0;
    for (std::size_t i = 0; i < toy.ft.n(); ++i)
        bg += model.vote_shares(&toy.ft.values[i * toy.ft.f()])[std::size_t(cls - 1)];
    bg /= double(toy.ft.n());

    double sum_phi = 0.0;
    for (double v : phi) sum_phi += v;
    // MC tolerance: 3 standard errors with per-sample spread bounded by 1
    const double tol = 3.0 / std::sqrt(double(n_samples));
    CHECK(std::abs(sum_phi - (fx - bg)) < tol);
}

TEST_CASE("shapley symmetry: duplicated columns get equal importance") {
    auto toy = make_toy(50, 1, 31);
    FeatureTable ft2;
    ft2.ids = toy.ft.ids;
    ft2.feature_names = {"f0", "f0_copy"};
    for (std::size_t i = 0; i < toy.ft.n(); ++i) {
        ft2.values.push_back(toy.ft.at(i, 0));
        ft2.values.push_back(toy.ft.at(i, 0));
    }
    ForestParams p;
    p.n_trees = 80;
    p.seed = 41;
    const auto model = train_forest(ft2, toy.c, p);
    ShapleyParams sp;
    sp.n_samples = 1500;
    sp.seed = 43;
    const auto rep = shapley_importance(model, ft2, toy.c, sp);
    CHECK(std::abs(rep.global_mean[0] - rep.global_mean[1]) < 0.03);
}

TEST_CASE("importance report structure and reproducibility") {
    const auto toy = make_toy(40, 3, 37);
    ForestParams p;
    p.n_trees = 30;
    p.seed = 47;
    const auto model = train_forest(toy.ft, toy.c, p);
    ShapleyParams sp;
    sp.n_samples = 200;
    sp.seed = 53;
    sp.threads = 1;
    const auto r1 = shapley_importance(model, toy.ft, toy.c, sp);
    sp.threads = 8;
    const auto r2 = shapley_importance(model, toy.ft, toy.c, sp);
    CHECK(r1.mean_abs_shapley == r2.mean_abs_shapley);
    CHECK(r1.ranking == r2.ranking);
    // informative feature ranks first
    CHECK(r1.ranking[0] == 0);
    for (double v : r1.mean_abs_shapley) CHECK(v >= 0.0);

    ShapleyParams bad;
    bad.n_samples = 5;
    CHECK_THROWS_AS(shapley_importance(model, toy.ft, toy.c, bad), ArgumentError);
}

TEST_CASE("build_feature_table derives reaction time") {
    std::vector<CovariateRow> rows(12);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].city_id = "c" + std::to_string(i);
        if (i % 3 != 0)
            rows[i].stay_at_home_date =
                Date{std::chrono::sys_days{to_days(parse_date("2020-03-15")) +
                                           std::chrono::days(int(i))}};
        rows[i].covariates["population"] = 1000.0 * double(i + 1);
    }
    const auto ft = build_feature_table(rows, parse_date("2020-03-15"));
    CHECK(ft.f() == 2);
    CHECK(ft.feature_names[0] == "reaction_time");
    CHECK(ft.at(0, 0) == 85.0); // absent date sentinel
    CHECK(ft.at(1, 0) == 1.0);
    CHECK(ft.at(1, 1) == 2000.0);
}
