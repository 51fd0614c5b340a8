#include "otseries/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"Temporal-dependency clustering of mobility/incidence series"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int threads = -1;
    long long seed = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "pipeline config file")
            ->required();
        sub->add_option("--threads", threads, "worker thread cap");
        sub->add_option("--seed", seed, "master RNG seed");
        sub->add_option("--set", overrides,
                        "config override as key=value (repeatable; flags win "
                        "over the config file)");
    };

    // subcommand name doubles as the last pipeline stage to run
    static const std::vector<std::pair<std::string, std::string>> subs = {
        {"ingest", "load and validate the time series"},
        {"embed", "rank-normalized point-cloud embeddings"},
        {"dist", "pairwise optimal-transport distance matrices"},
        {"cluster", "Ward dendrograms and flat cuts"},
        {"compare", "partition comparison graph"},
        {"bary", "per-cluster Wasserstein barycenters"},
        {"analyze", "covariate / spatial analysis"},
        {"run", "full pipeline"},
    };
    for (const auto& [name, desc] : subs) add_common(app.add_subcommand(name, desc));

    CLI11_PARSE(app, argc, argv);

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        otseries::PipelineConfig cfg = otseries::load_config(config_path);
        for (const auto& ov : overrides) {
            const auto eq = ov.find('=');
            if (eq == std::string::npos)
                throw otseries::ArgumentError("override must be key=value: '" +
                                              ov + "'");
            otseries::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
        }
        if (threads >= 0) cfg.threads = threads;
        if (seed >= 0) cfg.seed = std::uint64_t(seed);
        return otseries::run_pipeline(cfg, sub == "run" ? "" : sub);
    } catch (const otseries::ArgumentError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return otseries::kExitConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
