#include "otseries/forest.hpp"

#include "otseries/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otseries {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

long long reaction_time(const std::optional<Date>& stay_at_home,
                        const Date& reference, long long absent_value) {
    if (!stay_at_home) return absent_value;
    const auto diff = to_days(*stay_at_home) - to_days(reference);
    if (diff.count() < -366)
        throw ValidationError("reaction_time: order date more than a year before "
                              "the reference");
    return diff.count();
}

FeatureTable build_feature_table(const std::vector<CovariateRow>& rows,
                                 const Date& reference, bool include_raw_date) {
    if (rows.empty()) throw ArgumentError("build_feature_table: no rows");
    FeatureTable ft;
    ft.feature_names.push_back("reaction_time");
    if (include_raw_date) ft.feature_names.push_back("stay_at_home_days");
    for (const auto& [name, value] : rows[0].covariates)
        ft.feature_names.push_back(name);

    for (const auto& row : rows) {
        ft.ids.push_back(row.city_id);
        ft.values.push_back(double(reaction_time(row.stay_at_home_date, reference)));
        if (include_raw_date)
            // raw order date as days since the reference, distinct sentinel so
            // the column is not a copy of reaction_time
            ft.values.push_back(
                double(reaction_time(row.stay_at_home_date, reference, 9999)));
        for (const auto& name : ft.feature_names) {
            if (name == "reaction_time" || name == "stay_at_home_days") continue;
            auto it = row.covariates.find(name);
            if (it == row.covariates.end())
                throw ValidationError("build_feature_table: city " + row.city_id +
                                      " missing covariate '" + name + "'");
            ft.values.push_back(it->second);
        }
    }
    return ft;
}

int DecisionTree::predict(const double* x, std::size_t stride) const {
    int node = 0;
    while (nodes[std::size_t(node)].feature >= 0) {
        const auto& nd = nodes[std::size_t(node)];
        node = x[std::size_t(nd.feature) * stride] <= nd.threshold ? nd.left
                                                                   : nd.right;
    }
    return nodes[std::size_t(node)].leaf_class;
}

int ForestModel::predict(const double* x) const {
    const auto shares = vote_shares(x);
    // ties go to the smaller label
    return 1 + int(std::max_element(shares.begin(), shares.end()) - shares.begin());
}

std::vector<double> ForestModel::vote_shares(const double* x) const {
    std::vector<double> votes(std::size_t(n_classes), 0.0);
    for (const auto& t : trees) votes[std::size_t(t.predict(x) - 1)] += 1.0;
    for (double& v : votes) v /= double(trees.size());
    return votes;
}

namespace {

struct TreeBuilder {
    const FeatureTable& ft;
    const std::vector<int>& labels;
    int n_classes;
    int max_depth;
    int min_leaf;
    int mtry;
    std::mt19937_64 rng;
    DecisionTree tree;

    int majority(const std::vector<int>& samples) const {
        std::vector<int> counts(std::size_t(n_classes), 0);
        for (int s : samples) counts[std::size_t(labels[std::size_t(s)] - 1)]++;
        return 1 + int(std::max_element(counts.begin(), counts.end()) -
                       counts.begin());
    }

    double gini(const std::vector<int>& counts, int total) const {
        if (total == 0) return 0.0;
        double g = 1.0;
        for (int c : counts) {
            const double p = double(c) / double(total);
            g -= p * p;
        }
        return g;
    }

    int build(std::vector<int>& samples, int depth) {
        const int node_id = int(tree.nodes.size());
        tree.nodes.push_back({});

        bool pure = true;
        for (std::size_t i = 1; i < samples.size(); ++i)
            if (labels[std::size_t(samples[i])] != labels[std::size_t(samples[0])]) {
                pure = false;
                break;
            }
        if (pure || (max_depth > 0 && depth >= max_depth) ||
            int(samples.size()) < 2 * min_leaf) {
            tree.nodes[std::size_t(node_id)].leaf_class = majority(samples);
            return node_id;
        }

        // sample mtry candidate features without replacement
        std::vector<int> feats(ft.f());
        std::iota(feats.begin(), feats.end(), 0);
        for (int i = 0; i < mtry; ++i) {
            std::uniform_int_distribution<int> pick(i, int(feats.size()) - 1);
            std::swap(feats[std::size_t(i)], feats[std::size_t(pick(rng))]);
        }

        int best_feat = -1;
        double best_thr = 0.0, best_score = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, int>> vals(samples.size());
        for (int fi = 0; fi < mtry; ++fi) {
            const int feat = feats[std::size_t(fi)];
            for (std::size_t i = 0; i < samples.size(); ++i)
                vals[i] = {ft.at(std::size_t(samples[i]), std::size_t(feat)),
                           labels[std::size_t(samples[i])]};
            std::sort(vals.begin(), vals.end());

            std::vector<int> left_counts(std::size_t(n_classes), 0);
            std::vector<int> right_counts(std::size_t(n_classes), 0);
            for (const auto& [v, l] : vals) right_counts[std::size_t(l - 1)]++;
            const int total = int(vals.size());
            for (int i = 0; i + 1 < total; ++i) {
                left_counts[std::size_t(vals[std::size_t(i)].second - 1)]++;
                right_counts[std::size_t(vals[std::size_t(i)].second - 1)]--;
                if (vals[std::size_t(i)].first == vals[std::size_t(i + 1)].first)
                    continue;
                const int nl = i + 1, nr = total - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double score =
                    (nl * gini(left_counts, nl) + nr * gini(right_counts, nr)) /
                    double(total);
                if (score < best_score) {
                    best_score = score;
                    best_feat = feat;
                    best_thr = 0.5 * (vals[std::size_t(i)].first +
                                      vals[std::size_t(i + 1)].first);
                }
            }
        }

        if (best_feat < 0) {
            tree.nodes[std::size_t(node_id)].leaf_class = majority(samples);
            return node_id;
        }

        std::vector<int> left, right;
        for (int s : samples) {
            if (ft.at(std::size_t(s), std::size_t(best_feat)) <= best_thr)
                left.push_back(s);
            else
                right.push_back(s);
        }
        if (left.empty() || right.empty()) {
            tree.nodes[std::size_t(node_id)].leaf_class = majority(samples);
            return node_id;
        }
        tree.nodes[std::size_t(node_id)].feature = best_feat;
        tree.nodes[std::size_t(node_id)].threshold = best_thr;
        const int l = build(left, depth + 1);
        tree.nodes[std::size_t(node_id)].left = l;
        const int r = build(right, depth + 1);
        tree.nodes[std::size_t(node_id)].right = r;
        return node_id;
    }
};

} // namespace

ForestModel train_forest(const FeatureTable& ft, const Clustering& c,
                         const ForestParams& params) {
    const std::size_t n = ft.n();
    if (n < 10) throw ArgumentError("train_forest: need at least 10 samples");
    if (ft.ids != c.ids) throw ArgumentError("train_forest: id mismatch");
    const int n_classes = c.num_clusters();
    if (n_classes < 2) throw ArgumentError("train_forest: need at least 2 clusters");

    ForestModel model;
    model.n_classes = n_classes;
    model.n_features = ft.f();
    model.seed = params.seed;
    model.trees.resize(std::size_t(params.n_trees));
    model.in_bag.assign(std::size_t(params.n_trees),
                        std::vector<char>(n, 0));

    const int mtry = std::max(1, int(std::lround(std::sqrt(double(ft.f())))));

#ifdef _OPENMP
    const int nt = params.threads > 0 ? params.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#endif
    for (int t = 0; t < params.n_trees; ++t) {
        std::mt19937_64 rng(splitmix64(params.seed ^ (0x7ee5ULL + std::uint64_t(t))));
        std::vector<int> samples(n);
        std::uniform_int_distribution<int> pick(0, int(n) - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const int s = pick(rng);
            samples[i] = s;
            model.in_bag[std::size_t(t)][std::size_t(s)] = 1;
        }
        TreeBuilder builder{ft, c.labels, n_classes, params.max_depth,
                            params.min_leaf, mtry, rng, {}};
        builder.build(samples, 0);
        model.trees[std::size_t(t)] = std::move(builder.tree);
    }

    // out-of-bag accuracy
    int correct = 0, counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> votes(std::size_t(n_classes), 0);
        bool any = false;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
            if (model.in_bag[t][i]) continue;
            any = true;
            votes[std::size_t(model.trees[t].predict(&ft.values[i * ft.f()]) - 1)]++;
        }
        if (!any) continue;
        const int pred =
            1 + int(std::max_element(votes.begin(), votes.end()) - votes.begin());
        ++counted;
        if (pred == c.labels[i]) ++correct;
    }
    model.oob_accuracy = counted > 0 ? double(correct) / double(counted) : 0.0;
    return model;
}

std::vector<double> shapley_values_instance(const ForestModel& model,
                                            const FeatureTable& background,
                                            const std::vector<double>& x,
                                            int target_class, int n_samples,
                                            std::uint64_t seed) {
    if (n_samples < 10)
        throw ArgumentError("shapley_values_instance: n_samples must be >= 10");
    const std::size_t f = model.n_features;
    if (x.size() != f) throw ArgumentError("shapley_values_instance: bad x size");

    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_int_distribution<int> pick_bg(0, int(background.n()) - 1);
    std::vector<int> perm(f);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> phi(f, 0.0), with_j(f), without_j(f);

    for (int s = 0; s < n_samples; ++s) {
        std::shuffle(perm.begin(), perm.end(), rng);
        const int bg = pick_bg(rng);
        const double* z = &background.values[std::size_t(bg) * f];
        // walk the permutation: features seen so far come from x, rest from z
        std::copy(z, z + f, without_j.begin());
        for (std::size_t pos = 0; pos < f; ++pos) {
            const std::size_t j = std::size_t(perm[pos]);
            with_j = without_j;
            with_j[j] = x[j];
            const double v_with =
                model.vote_shares(with_j.data())[std::size_t(target_class - 1)];
            const double v_without =
                model.vote_shares(without_j.data())[std::size_t(target_class - 1)];
            phi[j] += v_with - v_without;
            without_j = with_j;
        }
    }
    for (double& v : phi) v /= double(n_samples);
    return phi;
}

ImportanceReport shapley_importance(const ForestModel& model,
                                    const FeatureTable& ft, const Clustering& c,
                                    const ShapleyParams& params) {
    if (params.n_samples < 10)
        throw ArgumentError("shapley_importance: n_samples must be >= 10");
    if (ft.ids != c.ids) throw ArgumentError("shapley_importance: id mismatch");
    const std::size_t n = ft.n(), f = ft.f();

    std::vector<std::vector<double>> abs_phi(n);
#ifdef _OPENMP
    const int nt = params.threads > 0 ? params.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#endif
    for (long long i = 0; i < (long long)n; ++i) {
        std::vector<double> x(&ft.values[std::size_t(i) * f],
                              &ft.values[std::size_t(i) * f] + f);
        auto phi = shapley_values_instance(
            model, ft, x, c.labels[std::size_t(i)], params.n_samples,
            splitmix64(params.seed ^ (0x51a9ULL + std::uint64_t(i))));
        for (double& v : phi) v = std::abs(v);
        abs_phi[std::size_t(i)] = std::move(phi);
    }

    ImportanceReport rep;
    rep.feature_names = ft.feature_names;
    const int n_clusters = c.num_clusters();
    for (int l = 1; l <= n_clusters; ++l) rep.cluster_labels.push_back(l);
    rep.mean_abs_shapley.assign(f * std::size_t(n_clusters), 0.0);
    rep.global_mean.assign(f, 0.0);

    std::vector<int> cluster_size(std::size_t(n_clusters), 0);
    for (std::size_t i = 0; i < n; ++i)
        cluster_size[std::size_t(c.labels[i] - 1)]++;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cl = std::size_t(c.labels[i] - 1);
        for (std::size_t j = 0; j < f; ++j) {
            rep.mean_abs_shapley[j * std::size_t(n_clusters) + cl] +=
                abs_phi[i][j] / double(cluster_size[cl]);
            rep.global_mean[j] += abs_phi[i][j] / double(n);
        }
    }
    rep.ranking.resize(f);
    std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
    std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                     [&](int a, int b) {
                         return rep.global_mean[std::size_t(a)] >
                                rep.global_mean[std::size_t(b)];
                     });
    return rep;
}

void write_importance_csv(const std::string& path, const ImportanceReport& rep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "feature,cluster,mean_abs_shapley\n";
    for (int fi : rep.ranking)
        for (std::size_t ci = 0; ci < rep.cluster_labels.size(); ++ci)
            out << csv::escape(rep.feature_names[std::size_t(fi)]) << ','
                << rep.cluster_labels[ci] << ','
                << csv::format_double(
                       rep.mean_abs_shapley[std::size_t(fi) *
                                                rep.cluster_labels.size() +
                                            ci])
                << '\n';
}

} // namespace otseries
