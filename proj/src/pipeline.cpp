#include "otseries/pipeline.hpp"

#include "otseries/barycenter.hpp"
#include "otseries/csv.hpp"
#include "otseries/data_model.hpp"
#include "otseries/forest.hpp"
#include "otseries/hierarchy.hpp"
#include "otseries/preprocess.hpp"
#include "otseries/spatial.hpp"
#include "otseries/transport.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace otseries {

std::uint64_t fnv1a_string(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_string(ss.str());
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
    return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path partial = path.string() + ".partial";
    {
        std::ofstream out(partial, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + partial.string());
        out << content;
    }
    fs::rename(partial, path);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace

void apply_override(PipelineConfig& cfg, const std::string& key,
                    const std::string& value) {
    try {
        if (key == "timeseries") cfg.timeseries_path = value;
        else if (key == "covariates") cfg.covariates_path = value;
        else if (key == "weights") cfg.weights_path = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "date_start") cfg.date_start = value;
        else if (key == "date_end") cfg.date_end = value;
        else if (key == "min_cases") cfg.min_cases = std::stoll(value);
        else if (key == "variants") cfg.variants = split_list(value);
        else if (key == "p") cfg.p = std::stod(value);
        else if (key == "solver") cfg.solver = value;
        else if (key == "sinkhorn_epsilon") cfg.sinkhorn_epsilon = std::stod(value);
        else if (key == "sinkhorn_max_iter") cfg.sinkhorn_max_iter = std::stoi(value);
        else if (key == "sinkhorn_tol") cfg.sinkhorn_tol = std::stod(value);
        else if (key == "nonconvergence_fatal")
            cfg.nonconvergence_fatal = (value == "true" || value == "1");
        else if (key == "clusters") cfg.clusters = std::stoi(value);
        else if (key == "bary_variant") cfg.bary_variant = value;
        else if (key == "bary_resolution") cfg.bary_resolution = std::stoi(value);
        else if (key == "bary_epsilon") cfg.bary_epsilon = std::stod(value);
        else if (key == "bary_max_iter") cfg.bary_max_iter = std::stoi(value);
        else if (key == "bary_tol") cfg.bary_tol = std::stod(value);
        else if (key == "n_trees") cfg.n_trees = std::stoi(value);
        else if (key == "max_depth") cfg.max_depth = std::stoi(value);
        else if (key == "shapley_samples") cfg.shapley_samples = std::stoi(value);
        else if (key == "include_raw_date")
            cfg.include_raw_date = (value == "true" || value == "1");
        else if (key == "moran_permutations")
            cfg.moran_permutations = std::stoi(value);
        else if (key == "knn_k") cfg.knn_k = std::stoi(value);
        else if (key == "reference_date") cfg.reference_date = value;
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "threads") cfg.threads = std::stoi(value);
        else throw ArgumentError("unknown config key: '" + key + "'");
    } catch (const ArgumentError&) {
        throw;
    } catch (const std::exception&) {
        throw ArgumentError("bad value for config key '" + key + "': '" + value +
                            "'");
    }
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open config file: " + path);
    PipelineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ArgumentError(path + ":" + std::to_string(lineno) +
                                ": expected 'key = value'");
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

namespace {

std::string config_fingerprint(const PipelineConfig& c) {
    std::ostringstream ss;
    ss << c.date_start << '|' << c.date_end << '|' << c.min_cases << '|' << c.p
       << '|' << c.solver << '|' << c.sinkhorn_epsilon << '|'
       << c.sinkhorn_max_iter << '|' << c.sinkhorn_tol << '|' << c.clusters << '|'
       << c.bary_variant << '|' << c.bary_resolution << '|' << c.bary_epsilon
       << '|' << c.bary_max_iter << '|' << c.bary_tol << '|' << c.n_trees << '|'
       << c.max_depth << '|' << c.shapley_samples << '|' << c.include_raw_date
       << '|' << c.moran_permutations << '|' << c.knn_k << '|' << c.reference_date
       << '|' << c.seed;
    for (const auto& v : c.variants) ss << '|' << v;
    return ss.str();
}

struct StageRunner {
    const PipelineConfig& cfg;
    fs::path out;
    json cache;       // stage -> key
    json manifest;    // built incrementally
    bool cache_dirty = false;

    StageRunner(const PipelineConfig& c) : cfg(c), out(c.out_dir) {
        fs::create_directories(out);
        const fs::path cache_path = out / "cache.json";
        if (fs::exists(cache_path)) {
            std::ifstream in(cache_path);
            try {
                in >> cache;
            } catch (...) {
                cache = json::object();
            }
        } else {
            cache = json::object();
        }
        manifest["artifacts"] = json::array();
        manifest["stages"] = json::object();
    }

    bool is_cached(const std::string& stage, std::uint64_t key,
                   const std::vector<std::string>& artifacts) {
        if (!cache.contains(stage) || cache[stage] != hex64(key)) return false;
        for (const auto& a : artifacts)
            if (!fs::exists(out / a)) return false;
        return true;
    }

    void record(const std::string& stage, std::uint64_t key, bool cached,
                const std::vector<std::string>& artifacts) {
        cache[stage] = hex64(key);
        cache_dirty = true;
        manifest["stages"][stage] = cached ? "cached" : "computed";
        for (const auto& a : artifacts)
            manifest["artifacts"].push_back(
                {{"path", a},
                 {"stage", stage},
                 {"hash", hex64(fnv1a_file((out / a).string()))}});
        std::fprintf(stderr, "[%s] %s\n", stage.c_str(),
                     cached ? "cached" : "computed");
    }

    void finish(std::uint64_t config_hash) {
        {
            std::ofstream c(out / "cache.json");
            c << cache.dump(2) << '\n';
        }
        manifest["config_hash"] = hex64(config_hash);
        manifest["seed"] = cfg.seed;
        atomic_write(out / "manifest.json", manifest.dump(2) + "\n");
    }
};

} // namespace

int run_pipeline(const PipelineConfig& cfg, const std::string& last_stage) {
    static const std::vector<std::string> kStages = {
        "ingest", "embed", "dist", "cluster", "compare", "bary", "analyze"};
    auto stage_index = [&](const std::string& s) {
        for (std::size_t i = 0; i < kStages.size(); ++i)
            if (kStages[i] == s) return int(i);
        return -1;
    };
    const int last = last_stage.empty() ? int(kStages.size()) - 1
                                        : stage_index(last_stage);
    if (last < 0) {
        std::fprintf(stderr, "error: unknown stage '%s'\n", last_stage.c_str());
        return kExitConfigError;
    }

    std::string current_stage = "config";
    try {
        if (cfg.timeseries_path.empty() || !fs::exists(cfg.timeseries_path))
            throw ArgumentError("timeseries input does not exist: '" +
                                cfg.timeseries_path + "'");
        if (!cfg.covariates_path.empty() && !fs::exists(cfg.covariates_path))
            throw ArgumentError("covariates input does not exist: '" +
                                cfg.covariates_path + "'");
        if (!cfg.weights_path.empty() && !fs::exists(cfg.weights_path))
            throw ArgumentError("weights input does not exist: '" +
                                cfg.weights_path + "'");
        if (cfg.solver != "exact" && cfg.solver != "sinkhorn")
            throw ArgumentError("solver must be 'exact' or 'sinkhorn'");
        for (const auto& v : cfg.variants) parse_variant(v);
        parse_variant(cfg.bary_variant);
        const Date d0 = parse_date(cfg.date_start);
        const Date d1 = parse_date(cfg.date_end);
        const Date ref = parse_date(cfg.reference_date);

        const std::uint64_t cfg_hash = fnv1a_string(config_fingerprint(cfg));
        const std::uint64_t ts_hash = fnv1a_file(cfg.timeseries_path);
        StageRunner runner(cfg);

        // ---- ingest -------------------------------------------------------
        current_stage = "ingest";
        const std::uint64_t ingest_key =
            ts_hash ^ fnv1a_string(cfg.date_start + cfg.date_end +
                                   std::to_string(cfg.min_cases));
        std::vector<CityRecord> records;
        {
            const std::vector<std::string> arts = {"records.csv"};
            if (runner.is_cached("ingest", ingest_key, arts)) {
                records = load_timeseries((runner.out / "records.csv").string(),
                                          d0, d1);
                runner.record("ingest", ingest_key, true, arts);
            } else {
                records = load_timeseries(cfg.timeseries_path, d0, d1);
                records = filter_by_min_cases(records, cfg.min_cases);
                if (records.size() < 2)
                    throw ValidationError(
                        "fewer than 2 cities survive the case threshold");
                emit_timeseries((runner.out / "records.csv").string(), records);
                runner.record("ingest", ingest_key, false, arts);
            }
        }
        if (last == 0) {
            runner.finish(cfg_hash);
            return kExitOk;
        }

        // ---- embed --------------------------------------------------------
        current_stage = "embed";
        std::map<std::string, std::vector<PointCloud>> clouds;
        for (const auto& v : cfg.variants) {
            auto& vec = clouds[v];
            for (const auto& r : records)
                vec.push_back(embed_city(r, parse_variant(v)));
        }
        {
            const std::uint64_t key = ingest_key ^ fnv1a_string("embed");
            std::vector<std::string> arts;
            for (const auto& v : cfg.variants) arts.push_back("clouds_" + v + ".csv");
            if (runner.is_cached("embed", key, arts)) {
                runner.record("embed", key, true, arts);
            } else {
                for (const auto& v : cfg.variants) {
                    std::string content = "city_id,x,y,z\n";
                    for (const auto& c : clouds[v])
                        for (const auto& pt : c.points)
                            content += c.city_id + ',' + csv::format_double(pt[0]) +
                                       ',' + csv::format_double(pt[1]) + ',' +
                                       csv::format_double(pt[2]) + '\n';
                    atomic_write(runner.out / ("clouds_" + v + ".csv"), content);
                }
                runner.record("embed", key, false, arts);
            }
        }
        if (last == 1) {
            runner.finish(cfg_hash);
            return kExitOk;
        }

        // ---- dist ---------------------------------------------------------
        current_stage = "dist";
        SolverChoice solver;
        solver.exact = cfg.solver == "exact";
        solver.sinkhorn = {cfg.sinkhorn_epsilon, cfg.sinkhorn_max_iter,
                           cfg.sinkhorn_tol};
        solver.fail_on_nonconvergence = cfg.nonconvergence_fatal;
        std::map<std::string, DistanceMatrix> dms;
        {
            const std::uint64_t key =
                ingest_key ^
                fnv1a_string("dist|" + cfg.solver + '|' +
                             csv::format_double(cfg.p) + '|' +
                             csv::format_double(cfg.sinkhorn_epsilon) + '|' +
                             std::to_string(cfg.sinkhorn_max_iter) + '|' +
                             csv::format_double(cfg.sinkhorn_tol));
            std::vector<std::string> arts;
            for (const auto& v : cfg.variants) arts.push_back("dist_" + v + ".csv");
            if (runner.is_cached("dist", key, arts)) {
                for (const auto& v : cfg.variants)
                    dms.emplace(v, read_distance_csv(
                                       (runner.out / ("dist_" + v + ".csv")).string()));
                runner.record("dist", key, true, arts);
            } else {
                for (const auto& v : cfg.variants) {
                    auto dm = distance_matrix(clouds[v], solver, cfg.p, cfg.threads);
                    write_distance_csv((runner.out / ("dist_" + v + ".csv")).string(),
                                       dm);
                    dms.emplace(v, std::move(dm));
                }
                runner.record("dist", key, false, arts);
            }
        }
        if (last == 2) {
            runner.finish(cfg_hash);
            return kExitOk;
        }

        // ---- cluster ------------------------------------------------------
        current_stage = "cluster";
        std::map<std::string, Dendrogram> dends;
        std::map<std::string, Clustering> cuts;
        for (const auto& v : cfg.variants) {
            dends.emplace(v, ward_linkage(dms.at(v)));
            cuts.emplace(v, flat_cut(dends.at(v),
                                     std::min(cfg.clusters,
                                              int(dms.at(v).size()))));
        }
        {
            const std::uint64_t key =
                ingest_key ^ fnv1a_string("cluster|" + std::to_string(cfg.clusters) +
                                          '|' + cfg.solver +
                                          csv::format_double(cfg.p));
            std::vector<std::string> arts = {"labels.csv"};
            for (const auto& v : cfg.variants) {
                arts.push_back("dendrogram_" + v + ".json");
                arts.push_back("dendrogram_" + v + ".nwk");
                arts.push_back("heights_" + v + ".csv");
                arts.push_back("seriated_" + v + ".csv");
            }
            if (runner.is_cached("cluster", key, arts)) {
                runner.record("cluster", key, true, arts);
            } else {
                std::string labels = "city_id";
                for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi)
                    labels += ",hc" + std::to_string(vi + 1);
                labels += '\n';
                for (std::size_t i = 0; i < records.size(); ++i) {
                    labels += records[i].city_id;
                    for (const auto& v : cfg.variants)
                        labels += ',' + std::to_string(cuts.at(v).labels[i]);
                    labels += '\n';
                }
                atomic_write(runner.out / "labels.csv", labels);
                for (const auto& v : cfg.variants) {
                    atomic_write(runner.out / ("dendrogram_" + v + ".json"),
                                 dendrogram_to_json(dends.at(v)) + "\n");
                    atomic_write(runner.out / ("dendrogram_" + v + ".nwk"),
                                 dendrogram_to_newick(dends.at(v)) + "\n");
                    std::string hp = "merge,height\n";
                    for (std::size_t m = 0; m < dends.at(v).merges.size(); ++m)
                        hp += std::to_string(m) + ',' +
                              csv::format_double(dends.at(v).merges[m].height) +
                              '\n';
                    atomic_write(runner.out / ("heights_" + v + ".csv"), hp);
                    write_seriated_csv(
                        (runner.out / ("seriated_" + v + ".csv")).string(),
                        dms.at(v), dends.at(v));
                }
                runner.record("cluster", key, false, arts);
            }
        }
        if (last == 3) {
            runner.finish(cfg_hash);
            return kExitOk;
        }

        // ---- compare ------------------------------------------------------
        current_stage = "compare";
        {
            const std::uint64_t key =
                ingest_key ^ fnv1a_string("compare|" + std::to_string(cfg.clusters));
            const std::vector<std::string> arts = {"partition_graph.dot",
                                                   "partition_graph.json"};
            if (runner.is_cached("compare", key, arts) ||
                cfg.variants.size() < 2) {
                if (cfg.variants.size() >= 2)
                    runner.record("compare", key, true, arts);
            } else {
                std::vector<Clustering> cols;
                for (const auto& v : cfg.variants) cols.push_back(cuts.at(v));
                const auto graph = compare_clusterings(cols);
                atomic_write(runner.out / "partition_graph.dot",
                             partition_graph_to_dot(graph));
                atomic_write(runner.out / "partition_graph.json",
                             partition_graph_to_json(graph) + "\n");
                runner.record("compare", key, false, arts);
            }
        }
        if (last == 4) {
            runner.finish(cfg_hash);
            return kExitOk;
        }

        // ---- bary ---------------------------------------------------------
        current_stage = "bary";
        const auto& bary_cut = cuts.at(cfg.bary_variant);
        {
            const std::uint64_t key =
                ingest_key ^
                fnv1a_string("bary|" + cfg.bary_variant + '|' +
                             std::to_string(cfg.bary_resolution) + '|' +
                             csv::format_double(cfg.bary_epsilon) + '|' +
                             std::to_string(cfg.bary_max_iter) + '|' +
                             csv::format_double(cfg.bary_tol) + '|' +
                             std::to_string(cfg.clusters));
            std::vector<std::string> arts = {"barycenter_meta.json"};
            for (int l = 1; l <= bary_cut.num_clusters(); ++l)
                arts.push_back("barycenter_" + std::to_string(l) + ".csv");
            if (runner.is_cached("bary", key, arts)) {
                runner.record("bary", key, true, arts);
            } else {
                BarycenterParams bp;
                bp.epsilon = cfg.bary_epsilon;
                bp.max_iter = cfg.bary_max_iter;
                bp.tol = cfg.bary_tol;
                bp.threads = cfg.threads;
                const int r = cfg.bary_resolution;
                auto results = cluster_barycenters(clouds.at(cfg.bary_variant),
                                                   bary_cut, {r, r, r}, bp);
                json meta;
                for (const auto& [label, res] : results) {
                    if (!res.converged && cfg.nonconvergence_fatal)
                        throw NonConvergence("barycenter for cluster " +
                                             std::to_string(label) +
                                             " did not converge");
                    write_barycenter_csv((runner.out / ("barycenter_" +
                                                        std::to_string(label) +
                                                        ".csv")).string(),
                                         res.histogram);
                    meta[std::to_string(label)] = {
                        {"objective", res.objective},
                        {"regularized_objective", res.regularized_objective},
                        {"iterations", res.iterations},
                        {"converged", res.converged}};
                }
                atomic_write(runner.out / "barycenter_meta.json",
                             meta.dump(2) + "\n");
                runner.record("bary", key, false, arts);
            }
        }
        if (last == 5) {
            runner.finish(cfg_hash);
            return kExitOk;
        }

        // ---- analyze ------------------------------------------------------
        current_stage = "analyze";
        if (!cfg.covariates_path.empty()) {
            const std::uint64_t key =
                ingest_key ^ fnv1a_file(cfg.covariates_path) ^
                fnv1a_string(
                    "analyze|" + std::to_string(cfg.clusters) + '|' +
                    std::to_string(cfg.n_trees) + '|' +
                    std::to_string(cfg.max_depth) + '|' +
                    std::to_string(cfg.shapley_samples) + '|' +
                    std::to_string(cfg.moran_permutations) + '|' +
                    std::to_string(cfg.knn_k) + '|' + cfg.reference_date + '|' +
                    std::to_string(cfg.seed) + '|' +
                    (cfg.include_raw_date ? "raw" : "rt") + '|' +
                    (cfg.weights_path.empty()
                         ? std::string("knn")
                         : hex64(fnv1a_file(cfg.weights_path))));
            const std::vector<std::string> arts = {"importance.csv",
                                                   "covariates_by_cluster.csv",
                                                   "analysis.json"};
            if (runner.is_cached("analyze", key, arts)) {
                runner.record("analyze", key, true, arts);
            } else {
                auto cov_rows = load_covariates(cfg.covariates_path);
                // align to the clustered cities
                std::map<std::string, const CovariateRow*> by_id;
                for (const auto& r : cov_rows) by_id[r.city_id] = &r;
                std::vector<CovariateRow> aligned;
                std::vector<double> lat, lon;
                bool have_coords = true;
                for (const auto& id : bary_cut.ids) {
                    auto it = by_id.find(id);
                    if (it == by_id.end())
                        throw ValidationError("covariates missing city " + id);
                    CovariateRow row = *it->second;
                    auto la = row.covariates.find("lat");
                    auto lo = row.covariates.find("lon");
                    if (la != row.covariates.end() && lo != row.covariates.end()) {
                        lat.push_back(la->second);
                        lon.push_back(lo->second);
                        row.covariates.erase("lat");
                        row.covariates.erase("lon");
                    } else {
                        have_coords = false;
                    }
                    aligned.push_back(std::move(row));
                }

                const auto ft =
                    build_feature_table(aligned, ref, cfg.include_raw_date);
                ForestParams fp;
                fp.n_trees = cfg.n_trees;
                fp.max_depth = cfg.max_depth;
                fp.seed = cfg.seed;
                fp.threads = cfg.threads;
                Clustering target = bary_cut;
                const auto model = train_forest(ft, target, fp);
                ShapleyParams sp;
                sp.n_samples = cfg.shapley_samples;
                sp.seed = cfg.seed;
                sp.threads = cfg.threads;
                const auto importance =
                    shapley_importance(model, ft, target, sp);
                write_importance_csv((runner.out / "importance.csv").string(),
                                     importance);

                // boxplot-ready long-format covariates
                std::string lf = "feature,cluster,value\n";
                for (std::size_t j = 0; j < ft.f(); ++j)
                    for (std::size_t i = 0; i < ft.n(); ++i)
                        lf += csv::escape(ft.feature_names[j]) + ',' +
                              std::to_string(target.labels[i]) + ',' +
                              csv::format_double(ft.at(i, j)) + '\n';
                atomic_write(runner.out / "covariates_by_cluster.csv", lf);

                json analysis;
                analysis["oob_accuracy"] = model.oob_accuracy;
                std::map<std::string, std::string> state_of;
                for (const auto& r : records) state_of[r.city_id] = r.state;
                for (const auto& v : cfg.variants)
                    analysis["spatial_homogeneity"][v] =
                        spatial_homogeneity(cuts.at(v), state_of);

                std::optional<SpatialWeights> weights;
                if (!cfg.weights_path.empty())
                    weights = load_spatial_weights(cfg.weights_path, bary_cut.ids);
                else if (have_coords && bary_cut.ids.size() > std::size_t(cfg.knn_k))
                    weights = knn_weights(bary_cut.ids, lat, lon, cfg.knn_k);
                if (weights) {
                    const auto moran = morans_i_labels(
                        target, *weights, cfg.moran_permutations, cfg.seed,
                        cfg.threads);
                    analysis["moran"]["weighted_mean_i"] = moran.weighted_mean_i;
                    for (std::size_t li = 0; li < moran.labels_present.size(); ++li) {
                        const std::string l =
                            std::to_string(moran.labels_present[li]);
                        analysis["moran"]["per_label"][l] = {
                            {"i", moran.i_values[li]},
                            {"p", moran.p_values[li]}};
                    }
                } else {
                    analysis["moran"] = nullptr;
                }
                atomic_write(runner.out / "analysis.json",
                             analysis.dump(2) + "\n");
                runner.record("analyze", key, false, arts);
            }
        }

        runner.finish(cfg_hash);
        return kExitOk;
    } catch (const NonConvergence& e) {
        std::fprintf(stderr, "error in stage %s: %s\n", current_stage.c_str(),
                     e.what());
        return kExitNonConvergence;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "error in stage %s: %s\n", current_stage.c_str(),
                     e.what());
        return kExitConfigError;
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "error in stage %s: %s\n", current_stage.c_str(),
                     e.what());
        return kExitDataError;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error in stage %s: %s\n", current_stage.c_str(),
                     e.what());
        return kExitDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error in stage %s: %s\n", current_stage.c_str(),
                     e.what());
        return 1;
    }
}

} // namespace otseries
