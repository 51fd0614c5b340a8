#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "otseries/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace otseries;

namespace {

DistanceMatrix make_dm(const std::vector<std::string>& ids,
                       const std::vector<std::vector<double>>& d) {
    DistanceMatrix m;
    m.ids = ids;
    const std::size_t k = ids.size();
    m.d.resize(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) m.d[i * k + j] = d[i][j];
    return m;
}

DistanceMatrix random_dm(std::mt19937_64& rng, int k) {
    std::uniform_real_distribution<double> u(0.1, 10.0);
    std::vector<std::vector<double>> d(std::size_t(k),
                                       std::vector<double>(std::size_t(k), 0.0));
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
            d[std::size_t(i)][std::size_t(j)] = d[std::size_t(j)][std::size_t(i)] =
                u(rng);
    std::vector<std::string> ids;
    for (int i = 0; i < k; ++i) ids.push_back("n" + std::to_string(i));
    return make_dm(ids, d);
}

std::vector<std::vector<int>> partition_sets(const Clustering& c) {
    std::vector<std::vector<int>> sets(std::size_t(c.num_clusters()));
    for (std::size_t i = 0; i < c.labels.size(); ++i)
        sets[std::size_t(c.labels[i] - 1)].push_back(int(i));
    std::sort(sets.begin(), sets.end());
    return sets;
}

} // namespace

TEST_CASE("two leaves merge at their distance") {
    const auto dm = make_dm({"A", "B"}, {{0, 1}, {1, 0}});
    const auto dend = ward_linkage(dm);
    REQUIRE(dend.merges.size() == 1);
    CHECK(dend.merges[0].height == doctest::Approx(1.0));
    CHECK(dend.merges[0].size == 2);
}

TEST_CASE("three-point worked example matches the hand evaluation") {
    // d(A,B)=1, d(A,C)=4, d(B,C)=5; squared: 1, 16, 25.
    // merge (A,B) at sqrt(1)=1; then
    // D2(AB,C) = (2*16 + 2*25 - 1*1)/3 = 27, height sqrt(27).
    const auto dm = make_dm({"A", "B", "C"}, {{0, 1, 4}, {1, 0, 5}, {4, 5, 0}});
    const auto dend = ward_linkage(dm);
    REQUIRE(dend.merges.size() == 2);
    CHECK(dend.merges[0].height == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(dend.merges[0].left == 0);
    CHECK(dend.merges[0].right == 1);
    CHECK(dend.merges[1].height == doctest::Approx(std::sqrt(27.0)).epsilon(1e-15));
}

TEST_CASE("equidistant tie-break is lexicographic and heights monotone") {
    const auto dm = make_dm({"A", "B", "C", "D"}, {{0, 1, 1, 1},
                                                   {1, 0, 1, 1},
                                                   {1, 1, 0, 1},
                                                   {1, 1, 1, 0}});
    const auto dend = ward_linkage(dm);
    REQUIRE(dend.merges.size() == 3);
    // first merge must be (A, B): smallest (min id, max id)
    CHECK(dend.merges[0].left == 0);
    CHECK(dend.merges[0].right == 1);
    // after the Ward update D2(AB,C) = (2+2-1)/3 = 1 ties with D2(C,D) = 1;
    // the contained-leaf key (0,2) of {AB,C} wins over (2,3)
    CHECK(dend.merges[1].left == 4);
    CHECK(dend.merges[1].right == 2);
    for (std::size_t i = 1; i < dend.merges.size(); ++i)
        CHECK(dend.merges[i].height >= dend.merges[i - 1].height - 1e-12);
}

TEST_CASE("ward heights are monotone on random matrices") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        const auto dm = random_dm(rng, 3 + int(rng() % 12));
        const auto dend = ward_linkage(dm);
        for (std::size_t i = 1; i < dend.merges.size(); ++i)
            CHECK(dend.merges[i].height >= dend.merges[i - 1].height - 1e-12);
    }
}

TEST_CASE("ward rejects bad input") {
    auto dm = make_dm({"A", "B"}, {{0, 1}, {2, 0}});
    CHECK_THROWS_AS(ward_linkage(dm), ValidationError);
}

TEST_CASE("flat_cut identity cases and refinement") {
    std::mt19937_64 rng(67);
    const auto dm = random_dm(rng, 9);
    const auto dend = ward_linkage(dm);

    const auto all_one = flat_cut(dend, 1);
    CHECK(all_one.num_clusters() == 1);
    const auto singletons = flat_cut(dend, 9);
    CHECK(singletons.num_clusters() == 9);
    CHECK_THROWS_AS(flat_cut(dend, 0), ArgumentError);
    CHECK_THROWS_AS(flat_cut(dend, 10), ArgumentError);

    // refinement: every cluster at level c is inside one cluster at c-1
    for (int c = 2; c <= 9; ++c) {
        const auto fine = flat_cut(dend, c);
        const auto coarse = flat_cut(dend, c - 1);
        for (int label = 1; label <= c; ++label) {
            int container = -1;
            for (std::size_t i = 0; i < fine.labels.size(); ++i) {
                if (fine.labels[i] != label) continue;
                if (container < 0) container = coarse.labels[i];
                CHECK(coarse.labels[i] == container);
            }
        }
    }
}

TEST_CASE("flat_cut on a 3-leaf tree") {
    const auto dm = make_dm({"A", "B", "C"}, {{0, 1, 4}, {1, 0, 5}, {4, 5, 0}});
    const auto cut = flat_cut(ward_linkage(dm), 2);
    CHECK(cut.labels[0] == cut.labels[1]);
    CHECK(cut.labels[0] != cut.labels[2]);
    CHECK(cut.labels[0] == 1); // first-appearance labeling
}

TEST_CASE("ward is invariant to id permutation up to relabeling") {
    std::mt19937_64 rng(71);
    const int k = 10;
    const auto dm = random_dm(rng, k);
    const auto base_sets = partition_sets(flat_cut(ward_linkage(dm), 4));

    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    DistanceMatrix shuffled;
    for (int i = 0; i < k; ++i) shuffled.ids.push_back(dm.ids[std::size_t(perm[std::size_t(i)])]);
    shuffled.d.resize(std::size_t(k) * k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            shuffled.at(std::size_t(i), std::size_t(j)) =
                dm.at(std::size_t(perm[std::size_t(i)]), std::size_t(perm[std::size_t(j)]));

    const auto cut2 = flat_cut(ward_linkage(shuffled), 4);
    // map back to original indexing and compare partitions as sets of id sets
    std::vector<int> labels_back(std::size_t(k), 0);
    for (int i = 0; i < k; ++i) labels_back[std::size_t(perm[std::size_t(i)])] = cut2.labels[std::size_t(i)];
    Clustering mapped{dm.ids, labels_back};
    CHECK(partition_sets(mapped) == base_sets);
}

TEST_CASE("seriate basics") {
    const auto dm2 = make_dm({"A", "B"}, {{0, 1}, {1, 0}});
    CHECK(seriate(ward_linkage(dm2)) == std::vector<int>{0, 1});

    const auto dm3 = make_dm({"A", "B", "C"}, {{0, 1, 4}, {1, 0, 5}, {4, 5, 0}});
    CHECK(seriate(ward_linkage(dm3)) == std::vector<int>{0, 1, 2});
}

TEST_CASE("compare_clusterings contingency") {
    Clustering a{{"w", "x", "y", "z"}, {1, 1, 2, 2}};
    Clustering b{{"w", "x", "y", "z"}, {1, 2, 2, 2}};
    const auto g = compare_clusterings({a, b});
    REQUIRE(g.edges.size() == 3);
    auto find_edge = [&](int ca, int cb) {
        for (const auto& e : g.edges)
            if (e.cluster_a == ca && e.cluster_b == cb) return e.shared_count;
        return -1;
    };
    CHECK(find_edge(1, 1) == 1);
    CHECK(find_edge(1, 2) == 1);
    CHECK(find_edge(2, 2) == 2);
    int total = 0;
    for (const auto& e : g.edges) total += e.shared_count;
    CHECK(total == 4);
}

TEST_CASE("compare_clusterings identity and layering") {
    Clustering a{{"w", "x", "y", "z"}, {1, 1, 2, 3}};
    const auto self = compare_clusterings({a, a});
    CHECK(self.edges.size() == 3); // one edge per cluster
    CHECK(self.layer_stats[0].crossing_count == 0);

    const auto three = compare_clusterings({a, a, a});
    CHECK(three.layer_stats.size() == 2);

    Clustering bad{{"w", "x", "y"}, {1, 1, 2}};
    CHECK_THROWS_AS(compare_clusterings({a, bad}), ValidationError);
}

TEST_CASE("spatial homogeneity") {
    Clustering c{{"a", "b", "c", "d"}, {1, 1, 2, 3}};
    std::map<std::string, std::string> s1{{"a", "S1"}, {"b", "S1"}, {"c", "S2"}, {"d", "S2"}};
    CHECK(spatial_homogeneity(c, s1) == doctest::Approx(1.5));

    Clustering one{{"a", "b"}, {1, 1}};
    std::map<std::string, std::string> s2{{"a", "S"}, {"b", "S"}};
    CHECK(spatial_homogeneity(one, s2) == doctest::Approx(1.0));

    Clustering each{{"a", "b", "c"}, {1, 2, 3}};
    std::map<std::string, std::string> s3{{"a", "S"}, {"b", "S"}, {"c", "S"}};
    CHECK(spatial_homogeneity(each, s3) == doctest::Approx(3.0));
}

TEST_CASE("exports are well-formed") {
    const auto dm = make_dm({"A", "B", "C"}, {{0, 1, 4}, {1, 0, 5}, {4, 5, 0}});
    const auto dend = ward_linkage(dm);
    const auto nwk = dendrogram_to_newick(dend);
    CHECK(nwk.find("A:") != std::string::npos);
    CHECK(nwk.back() == ';');
    const auto j = dendrogram_to_json(dend);
    CHECK(j.find("\"merges\"") != std::string::npos);

    Clustering a{{"w", "x"}, {1, 2}};
    const auto g = compare_clusterings({a, a});
    CHECK(partition_graph_to_dot(g).find("digraph") != std::string::npos);
    CHECK(partition_graph_to_json(g).find("\"edges\"") != std::string::npos);
}
