#pragma once

#include "otseries/types.hpp"

#include <cstdint>

namespace otseries {

struct PipelineConfig {
    std::string timeseries_path;
    std::string covariates_path; // empty: skip covariate analysis
    std::string weights_path;    // empty: derive kNN weights from lat/lon
    std::string out_dir = "out";

    std::string date_start = "2020-03-01";
    std::string date_end = "2020-05-31";
    long long min_cases = 1000;

    std::vector<std::string> variants = {"M", "DeltaM", "Mprime"};
    double p = 2.0;
    std::string solver = "exact"; // exact | sinkhorn
    double sinkhorn_epsilon = 1e-3;
    int sinkhorn_max_iter = 20000;
    double sinkhorn_tol = 1e-5;
    bool nonconvergence_fatal = false;

    int clusters = 10;

    std::string bary_variant = "Mprime";
    int bary_resolution = 20;
    double bary_epsilon = 0.01;
    int bary_max_iter = 1000;
    double bary_tol = 1e-7;

    int n_trees = 500;
    int max_depth = 0;
    int shapley_samples = 2000;
    bool include_raw_date = false;
    int moran_permutations = 999;
    int knn_k = 5;
    std::string reference_date = "2020-03-15";

    std::uint64_t seed = 0;
    int threads = 0;
};

// Exit codes shared by the library and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitNonConvergence = 4;

// Parses `key = value` lines; '#' starts a comment.
PipelineConfig load_config(const std::string& path);
void apply_override(PipelineConfig& cfg, const std::string& key,
                    const std::string& value);

// Runs stages in order (ingest, embed, dist, cluster, compare, bary, analyze)
// up to and including `last_stage` ("" = all). Stages whose inputs are
// unchanged are served from the on-disk cache. Writes manifest.json.
int run_pipeline(const PipelineConfig& cfg, const std::string& last_stage = "");

std::uint64_t fnv1a_file(const std::string& path);
std::uint64_t fnv1a_string(const std::string& data);

} // namespace otseries
