// Command-line front end: replicated simulation experiments from config
// files, two-sample analysis of CSV datasets, and weight-field diagnostics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "napa/napa.hpp"

namespace {

struct DatasetArgs {
    std::string sites_path, group1_path, group2_path;
    double alpha = 0.05;
    std::string methods = "napa,laws,bh,gap,gap-laws";
    double xi = 1e-5;
    std::optional<double> tau;
    std::optional<double> hs, hu, rho;
    std::string out_dir = ".";
};

struct LoadedDataset {
    napa::SpatialGrid grid;
    napa::TwoSampleDataset data;
    napa::SiteStatistics stats;
    double tau = 0.5;
    napa::BandwidthMatrix bw;
};

LoadedDataset load_and_prepare(const DatasetArgs& args, bool need_bandwidths) {
    LoadedDataset ds;
    ds.grid = napa::read_sites_csv(args.sites_path);
    ds.data.group1 = napa::read_group_csv(args.group1_path);
    ds.data.group2 = napa::read_group_csv(args.group2_path);
    const std::size_t m = ds.grid.site_count();
    if (ds.data.group1.cols != m)
        throw std::runtime_error("column mismatch: sites CSV has " + std::to_string(m) +
                                 " sites but group1 CSV has " +
                                 std::to_string(ds.data.group1.cols) + " columns");
    if (ds.data.group2.cols != m)
        throw std::runtime_error("column mismatch: sites CSV has " + std::to_string(m) +
                                 " sites but group2 CSV has " +
                                 std::to_string(ds.data.group2.cols) + " columns");
    ds.stats = napa::compute_site_statistics(ds.data);
    ds.tau = args.tau ? *args.tau : napa::select_tau(ds.stats.p_value);
    if (args.hs && args.hu) {
        ds.bw = napa::BandwidthMatrix{*args.hs, *args.hu,
                                      args.rho ? *args.rho
                                               : napa::estimate_pair_correlation(
                                                     ds.stats.u_stat, ds.grid)};
        napa::validate_bandwidth(ds.bw);
    } else if (args.hs || args.hu) {
        throw std::runtime_error("--hs and --hu must be given together");
    } else if (need_bandwidths) {
        ds.bw = napa::select_bandwidths(ds.stats, ds.grid, ds.tau);
        if (args.rho) {
            ds.bw.rho = *args.rho;
            napa::validate_bandwidth(ds.bw);
        }
    }
    return ds;
}

std::filesystem::path prepare_out_dir(const std::string& out_dir) {
    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override) {
    napa::ExperimentConfig cfg = napa::load_experiment_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    napa::MetricsSummary summary = napa::run_experiment(cfg);
    auto dir = prepare_out_dir(out_dir);
    napa::write_text_file((dir / "metrics.csv").string(), napa::metrics_to_csv(summary));
    if (cfg.dump_decisions) {
        // One decisions CSV per (sweep point, method) from the first
        // replication of that point.
        const std::size_t n_methods = cfg.methods.size();
        for (std::size_t i = 0; i < summary.first_rep_decisions.size(); ++i) {
            const napa::MetricsRow& row = summary.rows[i];
            const napa::DecisionSet& d = summary.first_rep_decisions[i];
            const std::vector<double>& raw_p = summary.first_rep_p[i / n_methods];
            std::string name = std::string("decisions_") + row.sweep_param + "_" +
                               napa::format_double(row.sweep_value) + "_" +
                               napa::method_name(row.method) + ".csv";
            napa::write_text_file((dir / name).string(), napa::decisions_to_csv(d, raw_p));
        }
    }
    std::cout << "wrote " << (dir / "metrics.csv").string() << " (" << summary.rows.size()
              << " rows)\n";
    return 0;
}

int cmd_analyze(const DatasetArgs& args) {
    std::vector<napa::Method> methods;
    for (const std::string& name : napa::detail::split(args.methods, ','))
        methods.push_back(napa::parse_method(name));
    bool need_bw = false;
    for (napa::Method m : methods)
        if (m == napa::Method::napa || m == napa::Method::laws ||
            m == napa::Method::gap_then_laws)
            need_bw = true;
    LoadedDataset ds = load_and_prepare(args, need_bw);
    auto dir = prepare_out_dir(args.out_dir);
    for (napa::Method m : methods) {
        napa::DecisionSet d = napa::detail::run_method(m, ds.stats, ds.grid, args.alpha, ds.tau,
                                                       ds.bw, args.xi, 3, 0);
        std::string name = std::string("decisions_") + napa::method_name(m) + ".csv";
        napa::write_decisions_csv((dir / name).string(), d, ds.stats.p_value);
        std::cout << napa::method_name(m) << ": " << d.rejection_count() << " rejected of "
                  << ds.grid.site_count() << " (threshold " << napa::format_double(d.threshold)
                  << ")\n";
    }
    return 0;
}

int cmd_estimate_pi(const DatasetArgs& args, bool spatial_only,
                    const std::string& oracle_config_path) {
    LoadedDataset ds = load_and_prepare(args, true);
    napa::WeightField field = napa::estimate_pi_tau(ds.stats, ds.grid, ds.tau, ds.bw, args.xi,
                                                    spatial_only);
    std::vector<double> oracle;
    const std::vector<double>* oracle_ptr = nullptr;
    if (!oracle_config_path.empty()) {
        napa::ExperimentConfig cfg = napa::load_experiment_config(oracle_config_path);
        if (cfg.extents != ds.grid.extents)
            throw std::runtime_error("oracle config extents do not match the sites CSV");
        if (cfg.beta1.mode != napa::Beta1Spec::Mode::constant)
            throw std::runtime_error("oracle column requires 'beta1 = constant v' in the config");
        std::vector<double> pi_field = napa::evaluate_region_field(ds.grid, cfg.regions);
        double delta = napa::oracle_u_shift(cfg, cfg.beta1.value);
        oracle.resize(ds.grid.site_count());
        for (std::size_t i = 0; i < oracle.size(); ++i)
            oracle[i] = napa::oracle_posterior(pi_field[i], ds.stats.u_stat[i], delta);
        oracle_ptr = &oracle;
    }
    auto dir = prepare_out_dir(args.out_dir);
    napa::write_text_file((dir / "pi_diagnostics.csv").string(),
                          napa::diagnostics_to_csv(ds.stats, field, oracle_ptr));
    std::cout << "wrote " << (dir / "pi_diagnostics.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NAPA: neighborhood-assisted, posterior-adjusted two-sample multiple testing"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a replicated experiment from a config file");
    std::string sim_config, sim_out = ".";
    std::optional<std::uint64_t> sim_seed;
    sim->add_option("--config", sim_config, "experiment config file")->required();
    sim->add_option("--out", sim_out, "output directory");
    sim->add_option("--seed", sim_seed, "override the config seed");

    // analyze
    auto* ana = app.add_subcommand("analyze", "test a two-sample CSV dataset");
    DatasetArgs ana_args;
    ana->add_option("--sites", ana_args.sites_path, "sites CSV")->required();
    ana->add_option("--group1", ana_args.group1_path, "group 1 observation CSV")->required();
    ana->add_option("--group2", ana_args.group2_path, "group 2 observation CSV")->required();
    ana->add_option("--alpha", ana_args.alpha, "FDR level");
    ana->add_option("--methods", ana_args.methods, "comma-separated method list");
    ana->add_option("--tau", ana_args.tau, "screening level override");
    ana->add_option("--hs", ana_args.hs, "spatial bandwidth override");
    ana->add_option("--hu", ana_args.hu, "auxiliary bandwidth override");
    ana->add_option("--rho", ana_args.rho, "kernel cross-correlation override");
    ana->add_option("--xi", ana_args.xi, "probability truncation constant");
    ana->add_option("--out", ana_args.out_dir, "output directory");

    // estimate-pi
    auto* est = app.add_subcommand("estimate-pi", "dump the estimated weight field");
    DatasetArgs est_args;
    bool est_spatial_only = false;
    std::string est_oracle_config;
    est->add_option("--sites", est_args.sites_path, "sites CSV")->required();
    est->add_option("--group1", est_args.group1_path, "group 1 observation CSV")->required();
    est->add_option("--group2", est_args.group2_path, "group 2 observation CSV")->required();
    est->add_option("--tau", est_args.tau, "screening level override");
    est->add_option("--hs", est_args.hs, "spatial bandwidth override");
    est->add_option("--hu", est_args.hu, "auxiliary bandwidth override");
    est->add_option("--rho", est_args.rho, "kernel cross-correlation override");
    est->add_option("--xi", est_args.xi, "probability truncation constant");
    est->add_flag("--spatial-only", est_spatial_only, "ignore the auxiliary statistic");
    est->add_option("--config", est_oracle_config,
                    "generative config adding the oracle posterior column");
    est->add_option("--out", est_args.out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_seed);
        if (ana->parsed()) return cmd_analyze(ana_args);
        if (est->parsed()) return cmd_estimate_pi(est_args, est_spatial_only, est_oracle_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
