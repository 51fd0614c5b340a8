#pragma once

#include "otseries/types.hpp"

namespace otseries {

struct FeatureTable {
    std::vector<std::string> ids;
    std::vector<std::string> feature_names; // unique
    std::vector<double> values;             // n x f row-major

    std::size_t n() const { return ids.size(); }
    std::size_t f() const { return feature_names.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * f() + j]; }
};

// Whole days from the reference date to the order date; the sentinel stands
// in when no order was issued.
long long reaction_time(const std::optional<Date>& stay_at_home,
                        const Date& reference, long long absent_value = 85);

// Builds the feature table from covariates: derived reaction_time plus every
// numeric covariate. With include_raw_date the order date itself (days since
// the reference) is added as a second feature.
FeatureTable build_feature_table(const std::vector<CovariateRow>& rows,
                                 const Date& reference,
                                 bool include_raw_date = false);

struct ForestParams {
    int n_trees = 500;
    int max_depth = 0; // 0 = unlimited
    int min_leaf = 1;
    std::uint64_t seed = 0;
    int threads = 0;
};

struct TreeNode {
    int feature = -1;       // -1 for leaves
    double threshold = 0.0; // go left when x[feature] <= threshold
    int left = -1, right = -1;
    int leaf_class = 0; // majority class at a leaf (1-based cluster label)
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // node 0 is the root
    int predict(const double* x, std::size_t stride = 1) const;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::vector<std::vector<char>> in_bag; // per tree, per sample
    int n_classes = 0;
    std::size_t n_features = 0;
    double oob_accuracy = 0.0;
    std::uint64_t seed = 0;

    int predict(const double* x) const;
    // fraction of trees voting for each class, classes 1..n_classes
    std::vector<double> vote_shares(const double* x) const;
};

// CART with Gini impurity, bootstrap bagging and sqrt(f) feature subsets per
// split; bit-reproducible for a fixed seed independent of thread count.
ForestModel train_forest(const FeatureTable& ft, const Clustering& c,
                         const ForestParams& params);

struct ImportanceReport {
    std::vector<std::string> feature_names;
    std::vector<int> cluster_labels;
    // mean |phi| per (feature, cluster): values[f * clusters + c]
    std::vector<double> mean_abs_shapley;
    std::vector<double> global_mean; // per feature
    std::vector<int> ranking;        // feature indices, descending global mean
};

struct ShapleyParams {
    int n_samples = 2000;
    std::uint64_t seed = 0;
    int threads = 0;
};

// Monte Carlo permutation-sampling Shapley values of the model's vote share
// for each instance's own cluster, background = the full feature table.
ImportanceReport shapley_importance(const ForestModel& model,
                                    const FeatureTable& ft, const Clustering& c,
                                    const ShapleyParams& params);

// Shapley values for one instance and one class; exposed for the axiom tests.
std::vector<double> shapley_values_instance(const ForestModel& model,
                                            const FeatureTable& background,
                                            const std::vector<double>& x,
                                            int target_class, int n_samples,
                                            std::uint64_t seed);

void write_importance_csv(const std::string& path, const ImportanceReport& rep);

} // namespace otseries
