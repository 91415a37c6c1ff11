#ifndef SYNCKERNEL_CLI_HPP
#define SYNCKERNEL_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "synckernel/data.hpp"
#include "synckernel/metric.hpp"
#include "synckernel/regress.hpp"
#include "synckernel/sim.hpp"
#include "synckernel/stats.hpp"
#include "synckernel/sync.hpp"

namespace synckernel::cli {

/// Every parameter any subcommand reads. Names match the JSON keys accepted by
/// --config and written to run_manifest.json.
struct RunConfig {
    std::string command;
    std::string manifest;
    std::string out = ".";
    std::string gamma = "2.6";
    std::size_t permutations = 2000;
    double alpha = 0.05;
    std::size_t pairs = 2000;
    std::optional<std::uint64_t> seed;
    std::size_t nboot = 10;
    unsigned threads = 0;
    std::string mode = "strict";
    bool parametric_f = false;
    std::string config;

    std::string source;
    std::string target;
    std::string method = "kernel";

    double grid_min = 0.1;
    double grid_max = 10.0;
    std::size_t grid_count = 50;
    std::size_t bandwidth_vertices = 256;
    bool dump_distances = false;

    SimulationConfig sim;
    bool write_cohort = false;
};

namespace detail {

inline void apply_config_file(RunConfig& rc) {
    std::ifstream in(rc.config);
    if (!in) throw UnreadableFileError("cannot open config: " + rc.config);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + rc.config + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config " + rc.config + ": expected a JSON object");
    if (j.contains("command") && j["command"] != rc.command)
        throw UsageError("config " + rc.config + " was recorded for '" + j["command"].get<std::string>() +
                         "', not '" + rc.command + "'");
    try {
        if (j.contains("manifest")) rc.manifest = j["manifest"].get<std::string>();
        if (j.contains("gamma")) {
            const auto& g = j["gamma"];
            rc.gamma = g.is_string() ? g.get<std::string>() : format_float(g.get<double>());
        }
        if (j.contains("permutations")) rc.permutations = j["permutations"].get<std::size_t>();
        if (j.contains("alpha")) rc.alpha = j["alpha"].get<double>();
        if (j.contains("pairs")) rc.pairs = j["pairs"].get<std::size_t>();
        if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("nboot")) rc.nboot = j["nboot"].get<std::size_t>();
        if (j.contains("mode")) rc.mode = j["mode"].get<std::string>();
        if (j.contains("parametric_f")) rc.parametric_f = j["parametric_f"].get<bool>();
        if (j.contains("source")) rc.source = j["source"].get<std::string>();
        if (j.contains("target")) rc.target = j["target"].get<std::string>();
        if (j.contains("method")) rc.method = j["method"].get<std::string>();
        if (j.contains("grid_min")) rc.grid_min = j["grid_min"].get<double>();
        if (j.contains("grid_max")) rc.grid_max = j["grid_max"].get<double>();
        if (j.contains("grid_count")) rc.grid_count = j["grid_count"].get<std::size_t>();
        if (j.contains("bandwidth_vertices")) rc.bandwidth_vertices = j["bandwidth_vertices"].get<std::size_t>();
        if (j.contains("write_cohort")) rc.write_cohort = j["write_cohort"].get<bool>();
        if (j.contains("dump_distances")) rc.dump_distances = j["dump_distances"].get<bool>();
        if (j.contains("simulation")) rc.sim = simulation_config_from_json(j["simulation"], rc.sim);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + rc.config + ": " + e.what());
    }
}

inline std::uint64_t require_seed(const RunConfig& rc) {
    if (!rc.seed) throw UsageError(rc.command + ": --seed is required (runs are never seeded implicitly)");
    return *rc.seed;
}

inline Parallelism parallelism(const RunConfig& rc) { return {rc.threads}; }

inline TestConfig test_config(const RunConfig& rc, double gamma) {
    TestConfig cfg;
    cfg.n_permutations = rc.permutations;
    cfg.alpha = rc.alpha;
    cfg.seed = require_seed(rc);
    cfg.gamma = gamma;
    cfg.parametric_f = rc.parametric_f;
    cfg.parallelism = parallelism(rc);
    cfg.validate();
    return cfg;
}

inline bool gamma_is_auto(const RunConfig& rc) { return rc.gamma == "auto"; }

inline double fixed_gamma(const RunConfig& rc) {
    try {
        std::size_t used = 0;
        const double g = std::stod(rc.gamma, &used);
        if (used != rc.gamma.size() || !(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gamma");
        return g;
    } catch (const std::exception&) {
        throw UsageError("--gamma must be a positive number or 'auto', got '" + rc.gamma + "'");
    }
}

inline Cohort load(const RunConfig& rc) {
    if (rc.manifest.empty()) throw UsageError(rc.command + ": --manifest is required");
    return load_cohort(rc.manifest, parse_normalize_mode(rc.mode));
}

inline std::ofstream open_output(const RunConfig& rc, const std::string& name) {
    std::filesystem::create_directories(rc.out);
    const auto path = std::filesystem::path(rc.out) / name;
    std::ofstream out(path);
    if (!out) throw UnreadableFileError("cannot write " + path.string());
    return out;
}

inline BandwidthGrid run_bandwidth_selection(const RunConfig& rc, const Cohort& cohort, const DistanceTensor& geo) {
    auto grid = BandwidthGrid::log_spaced(rc.grid_min, rc.grid_max, rc.grid_count);
    const auto vertices = sample_vertices(geo.excluded_mask(), rc.bandwidth_vertices, require_seed(rc));
    grid = select_bandwidth(geo, cohort.scores(), std::move(grid), vertices, parallelism(rc));
    auto out = open_output(rc, "bandwidth.tsv");
    write_bandwidth_tsv(out, grid);
    return grid;
}

/// Everything that determines the outputs; re-running with this file as
/// --config reproduces them. The thread count is deliberately absent because
/// results do not depend on it.
inline nlohmann::json run_manifest(const RunConfig& rc, const nlohmann::json& resolved) {
    nlohmann::json j;
    j["command"] = rc.command;
    if (!rc.manifest.empty()) j["manifest"] = std::filesystem::absolute(rc.manifest).lexically_normal().string();
    if (rc.seed) j["seed"] = *rc.seed;
    j["mode"] = rc.mode;
    const auto& c = rc.command;
    if (c == "pairwise" || c == "kernreg" || c == "simulate" || c == "bootstrap") {
        j["permutations"] = rc.permutations;
        j["alpha"] = rc.alpha;
    }
    if (c == "pairwise" || c == "simulate" || c == "bootstrap") j["pairs"] = rc.pairs;
    if (c == "kernreg" || c == "simulate" || c == "bootstrap") {
        if (gamma_is_auto(rc))
            j["gamma"] = "auto";
        else
            j["gamma"] = fixed_gamma(rc);
        j["parametric_f"] = rc.parametric_f;
    }
    if (c == "kernreg") j["dump_distances"] = rc.dump_distances;
    if (c == "simulate") j["write_cohort"] = rc.write_cohort;
    if (c != "sync" && c != "pairwise") {
        j["grid_min"] = rc.grid_min;
        j["grid_max"] = rc.grid_max;
        j["grid_count"] = rc.grid_count;
        j["bandwidth_vertices"] = rc.bandwidth_vertices;
    }
    if (c == "sync") {
        j["source"] = rc.source;
        j["target"] = rc.target;
    }
    if (c == "bootstrap") {
        j["method"] = rc.method;
        j["nboot"] = rc.nboot;
    }
    if (c == "simulate") {
        const auto& s = rc.sim;
        j["simulation"] = {{"n_subjects", s.n_subjects},   {"n_timepoints", s.n_timepoints},
                           {"n_vertices", s.n_vertices},   {"roi", s.resolved_roi()},
                           {"sigma_max", s.sigma_max},     {"score_range", {s.score_low, s.score_high}},
                           {"seed", s.seed},               {"latent_rank", s.latent_rank},
                           {"background_noise", s.background_noise}};
        if (!rc.manifest.empty()) j.erase("manifest");
    }
    j["resolved"] = resolved;
    return j;
}

inline void write_run_manifest(const RunConfig& rc, const nlohmann::json& resolved) {
    auto out = open_output(rc, "run_manifest.json");
    out << run_manifest(rc, resolved).dump(2) << '\n';
}

inline std::size_t find_subject(const Cohort& cohort, const std::string& id) {
    for (std::size_t i = 0; i < cohort.size(); ++i)
        if (cohort.subject(i).id == id) return i;
    throw DataError("no subject with id '" + id + "' in the manifest");
}

// ---- subcommands ---------------------------------------------------------

inline void cmd_sync(RunConfig& rc) {
    const auto cohort = load(rc);
    if (cohort.size() < 2) throw DataError("sync: manifest needs at least two subjects");
    if (rc.target.empty()) rc.target = cohort.subject(0).id;
    if (rc.source.empty()) rc.source = cohort.subject(1).id;
    const auto& x = cohort.subject(find_subject(cohort, rc.target)).data;
    const auto& y = cohort.subject(find_subject(cohort, rc.source)).data;
    const auto o = compute_sync_transform(x, y, rc.target, rc.source);
    const double err = sync_error(x, y, o);
    store_transform(o, std::filesystem::path(rc.out) / "transform.skot");
    auto out = open_output(rc, "sync.tsv");
    out << "source\ttarget\tsync_error\tunsynced_error\torthogonality_error\n";
    out << rc.source << '\t' << rc.target << '\t' << format_float(err) << '\t'
        << format_float((x.values() - y.values()).squaredNorm()) << '\t' << format_float(o.orthogonality_error()) << '\n';
    write_run_manifest(rc, {{"sync_error", err}});
}

inline void cmd_pairwise(RunConfig& rc) {
    const auto cohort = load(rc);
    const auto cfg = test_config(rc, 2.6);
    const auto m = std::min(rc.pairs, pair_count(cohort.size()));
    const auto sample = sample_pairs(cohort.size(), m, cohort.scores(), cfg.seed);
    const auto d = build_distance_tensor(cohort, DistanceKind::euclidean_sq, sample.pairs, cfg.parallelism);
    const auto map = pairwise_correlation_test(d, sample, cohort.scores(), cfg);
    auto out = open_output(rc, "pairwise.tsv");
    write_statmap_tsv(out, map);
    write_run_manifest(rc, {{"pairs", m}});
}

inline void cmd_kernreg(RunConfig& rc) {
    const auto cohort = load(rc);
    const auto par = parallelism(rc);
    const auto geo = build_distance_tensor(cohort, DistanceKind::geodesic, std::nullopt, par);
    if (rc.dump_distances) store_distance_tensor(geo, std::filesystem::path(rc.out) / "distances.skdt");
    nlohmann::json resolved;
    double gamma = 0.0;
    if (gamma_is_auto(rc)) {
        require_seed(rc);
        gamma = *run_bandwidth_selection(rc, cohort, geo).selected;
    } else {
        gamma = fixed_gamma(rc);
    }
    resolved["gamma"] = gamma;
    const auto map = kernel_regression_test(geo, cohort.scores(), test_config(rc, gamma));
    auto out = open_output(rc, "kernreg.tsv");
    write_statmap_tsv(out, map);
    write_run_manifest(rc, resolved);
}

inline void cmd_bandwidth(RunConfig& rc) {
    const auto cohort = load(rc);
    require_seed(rc);
    const auto geo = build_distance_tensor(cohort, DistanceKind::geodesic, std::nullopt, parallelism(rc));
    const auto grid = run_bandwidth_selection(rc, cohort, geo);
    write_run_manifest(rc, {{"gamma", *grid.selected}});
}

inline void cmd_simulate(RunConfig& rc) {
    rc.sim.seed = require_seed(rc);
    const auto par = parallelism(rc);
    const auto cohort = inject_roi_noise(generate_synthetic_cohort(rc.sim, par), rc.sim, par);
    if (rc.write_cohort) write_cohort(cohort, std::filesystem::path(rc.out) / "cohort");
    const auto tensors = build_distance_tensors(cohort, par);
    nlohmann::json resolved;
    double gamma = 0.0;
    if (gamma_is_auto(rc)) {
        gamma = *run_bandwidth_selection(rc, cohort, tensors.geodesic).selected;
    } else {
        gamma = fixed_gamma(rc);
    }
    resolved["gamma"] = gamma;
    const auto report = run_both_tests(cohort, rc.sim.resolved_roi(), test_config(rc, gamma), rc.pairs, &tensors);
    resolved["pairs"] = report.n_pairs;
    {
        auto out = open_output(rc, "simulation.tsv");
        write_simulation_tsv(out, report);
    }
    {
        auto out = open_output(rc, "simulate_pairwise.tsv");
        write_statmap_tsv(out, report.pairwise.map);
    }
    {
        auto out = open_output(rc, "simulate_kernel.tsv");
        write_statmap_tsv(out, report.kernel.map);
    }
    write_run_manifest(rc, resolved);
}

inline void cmd_bootstrap(RunConfig& rc) {
    const auto cohort = load(rc);
    const auto method = parse_method(rc.method);
    const auto par = parallelism(rc);
    const auto tensors = build_distance_tensors(cohort, par);
    nlohmann::json resolved;
    double gamma = 2.6;
    if (method == TestMethod::kernel) {
        if (gamma_is_auto(rc)) {
            require_seed(rc);
            gamma = *run_bandwidth_selection(rc, cohort, tensors.geodesic).selected;
        } else {
            gamma = fixed_gamma(rc);
        }
        resolved["gamma"] = gamma;
    }
    const auto report = bootstrap_stability(tensors, cohort.scores(), method, rc.nboot, test_config(rc, gamma), rc.pairs);
    auto out = open_output(rc, "bootstrap.tsv");
    write_bootstrap_tsv(out, report);
    write_run_manifest(rc, resolved);
}

}  // namespace detail

/// Parses argv, runs one subcommand, and maps failures to exit codes:
/// 0 success, 1 usage, 2 data/format, 3 numerical/degeneracy.
inline int run_pipeline(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig rc;
    CLI::App app{"Pointwise kernel-regression group analysis of synchronized time series", "synckernel"};
    app.require_subcommand(1);

    std::uint64_t seed_value = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--manifest", rc.manifest, "Cohort manifest (JSON)");
        sub->add_option("--out", rc.out, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed_value, "Seed for every random choice (required for randomized commands)");
        sub->add_option("--threads", rc.threads, "Worker threads (0 = hardware concurrency)")->capture_default_str();
        sub->add_option("--mode", rc.mode, "Zero-variance column handling")
            ->check(CLI::IsMember({"strict", "permissive"}))
            ->capture_default_str();
        sub->add_option("--config", rc.config, "JSON config (e.g. a run_manifest.json); overrides flags");
    };
    auto add_test = [&](CLI::App* sub) {
        sub->add_option("--permutations", rc.permutations, "Permutations per test")->capture_default_str();
        sub->add_option("--alpha", rc.alpha, "FDR level")->capture_default_str();
    };
    auto add_kernel = [&](CLI::App* sub) {
        sub->add_option("--gamma", rc.gamma, "Kernel bandwidth, or 'auto' for LOO grid search")->capture_default_str();
        sub->add_flag("--parametric-f", rc.parametric_f, "Parametric F(N-1, N-1) p-values for the kernel test");
    };
    auto add_grid = [&](CLI::App* sub) {
        sub->add_option("--grid-min", rc.grid_min, "Smallest bandwidth in the grid")->capture_default_str();
        sub->add_option("--grid-max", rc.grid_max, "Largest bandwidth in the grid")->capture_default_str();
        sub->add_option("--grid-count", rc.grid_count, "Number of log-spaced grid values")->capture_default_str();
        sub->add_option("--bandwidth-vertices", rc.bandwidth_vertices, "Vertices sampled for LOO selection")
            ->capture_default_str();
    };

    auto* sync = app.add_subcommand("sync", "Sync one subject onto another; write the transform and residual");
    add_common(sync);
    sync->add_option("--source", rc.source, "Subject id to transform (default: second subject)");
    sync->add_option("--target", rc.target, "Reference subject id (default: first subject)");

    auto* pairwise = app.add_subcommand("pairwise", "Pairwise distance-correlation test");
    add_common(pairwise);
    add_test(pairwise);
    pairwise->add_option("--pairs", rc.pairs, "Random subject pairs (capped at N(N-1)/2)")->capture_default_str();

    auto* kernreg = app.add_subcommand("kernreg", "Kernel-regression residual-variance test");
    add_common(kernreg);
    add_test(kernreg);
    add_kernel(kernreg);
    add_grid(kernreg);
    kernreg->add_flag("--dump-distances", rc.dump_distances, "Also write the geodesic distance tensor (SKDT)");

    auto* bandwidth = app.add_subcommand("bandwidth", "Leave-one-out bandwidth grid search");
    add_common(bandwidth);
    add_grid(bandwidth);

    auto* simulate = app.add_subcommand("simulate", "Synthetic ROI-noise study comparing both tests");
    add_common(simulate);
    add_test(simulate);
    add_kernel(simulate);
    add_grid(simulate);
    simulate->add_option("--pairs", rc.pairs, "Random subject pairs (capped at N(N-1)/2)")->capture_default_str();
    simulate->add_option("--subjects", rc.sim.n_subjects, "Number of subjects")->capture_default_str();
    simulate->add_option("--timepoints", rc.sim.n_timepoints, "Time points per subject")->capture_default_str();
    simulate->add_option("--vertices", rc.sim.n_vertices, "Vertices per subject")->capture_default_str();
    std::size_t roi_size = 0;
    simulate->add_option("--roi-size", roi_size, "ROI = first k vertices (default V/10)");
    simulate->add_option("--sigma-max", rc.sim.sigma_max, "Noise std at the highest score")->capture_default_str();
    simulate->add_option("--background-noise", rc.sim.background_noise, "I.i.d. background noise std")
        ->capture_default_str();
    simulate->add_option("--latent-rank", rc.sim.latent_rank, "Rank of the shared latent signal")->capture_default_str();
    simulate->add_flag("--write-cohort", rc.write_cohort, "Also write the generated cohort (SKTS + manifest)");

    auto* bootstrap = app.add_subcommand("bootstrap", "Bootstrap variance of per-vertex p-values");
    add_common(bootstrap);
    add_test(bootstrap);
    add_kernel(bootstrap);
    add_grid(bootstrap);
    bootstrap->add_option("--pairs", rc.pairs, "Random subject pairs per draw (pairwise method)")->capture_default_str();
    bootstrap->add_option("--nboot", rc.nboot, "Number of bootstrap draws")->capture_default_str();
    bootstrap->add_option("--method", rc.method, "Test to bootstrap")
        ->check(CLI::IsMember({"pairwise", "kernel"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return static_cast<int>(ErrorKind::usage);
    }

    CLI::App* chosen = app.get_subcommands().front();
    rc.command = chosen->get_name();
    if (chosen->count("--seed")) rc.seed = seed_value;
    if (roi_size > 0) {
        rc.sim.roi.resize(roi_size);
        for (std::size_t v = 0; v < roi_size; ++v) rc.sim.roi[v] = v;
    }

    try {
        if (!rc.config.empty()) detail::apply_config_file(rc);
        std::filesystem::create_directories(rc.out);
        if (rc.command == "sync") detail::cmd_sync(rc);
        else if (rc.command == "pairwise") detail::cmd_pairwise(rc);
        else if (rc.command == "kernreg") detail::cmd_kernreg(rc);
        else if (rc.command == "bandwidth") detail::cmd_bandwidth(rc);
        else if (rc.command == "simulate") detail::cmd_simulate(rc);
        else if (rc.command == "bootstrap") detail::cmd_bootstrap(rc);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::data);
    }
    return 0;
}

}  // namespace synckernel::cli

#endif  // SYNCKERNEL_CLI_HPP
