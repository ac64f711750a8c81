#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "napa/csv.hpp"
#include "napa/simulate.hpp"

using namespace napa;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.extents = {120};
    cfg.regions.baseline = 0.05;
    cfg.regions.boxes = {{{{30, 50}}, 0.8}};
    cfg.mu = 3.0 / std::sqrt(20.0);
    cfg.beta1 = {Beta1Spec::Mode::uniform, 0.0, -1.0 / std::sqrt(5.0), 1.0 / std::sqrt(5.0)};
    cfg.n1 = cfg.n2 = 40;
    cfg.alpha = 0.05;
    cfg.replications = 3;
    cfg.seed = 4242;
    cfg.methods = {Method::napa, Method::laws, Method::bh, Method::gap_lite,
                   Method::gap_then_laws};
    return cfg;
}

}  // namespace

TEST_CASE("generate_dataset extremes of the mixture field") {
    ExperimentConfig cfg = small_config();
    SpatialGrid grid = build_grid(cfg.extents);

    std::vector<double> null_field(grid.site_count(), 0.0);
    RngStream rng = RngStream::substream(1, {0});
    GeneratedData all_null = generate_dataset(cfg, grid, null_field, rng);
    for (auto t : all_null.theta) CHECK(t == 0);

    std::vector<double> full_field(grid.site_count(), 1.0);
    ExperimentConfig cfg2 = cfg;
    cfg2.beta1 = {Beta1Spec::Mode::constant, 1.0 / std::sqrt(20.0), 0.0, 0.0};
    cfg2.n1 = cfg2.n2 = 400;
    RngStream rng2 = RngStream::substream(1, {1});
    GeneratedData all_signal = generate_dataset(cfg2, grid, full_field, rng2);
    for (auto t : all_signal.theta) CHECK(t == 1);
    // group-2 population mean is mu + beta1 = 4/sqrt(20); check the grand mean
    double mean2 = 0.0;
    for (double v : all_signal.data.group2.values) mean2 += v;
    mean2 /= static_cast<double>(all_signal.data.group2.values.size());
    CHECK_THAT(mean2, Catch::Matchers::WithinAbs(4.0 / std::sqrt(20.0), 0.05));
}

TEST_CASE("generate_dataset is bit-identical under a fixed stream") {
    ExperimentConfig cfg = small_config();
    SpatialGrid grid = build_grid(cfg.extents);
    std::vector<double> field = evaluate_region_field(grid, cfg.regions);
    RngStream a = RngStream::substream(cfg.seed, {3, 7});
    RngStream b = RngStream::substream(cfg.seed, {3, 7});
    GeneratedData ga = generate_dataset(cfg, grid, field, a);
    GeneratedData gb = generate_dataset(cfg, grid, field, b);
    CHECK(ga.data.group1.values == gb.data.group1.values);
    CHECK(ga.data.group2.values == gb.data.group2.values);
    CHECK(ga.theta == gb.theta);
    CHECK(ga.beta1 == gb.beta1);
}

TEST_CASE("empirical_fdp and empirical_power") {
    DecisionSet d;
    d.rejected = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    d.weighted_p.assign(10, 0.0);
    std::vector<std::uint8_t> theta = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
    CHECK(empirical_fdp(d, theta) == 0.2);  // 10 rejections, 2 null
    CHECK(empirical_power(d, theta).tp_count == 8);
    CHECK(empirical_power(d, theta).tp_proportion == 1.0);

    DecisionSet none;
    none.rejected.assign(10, 0);
    none.weighted_p.assign(10, 1.0);
    CHECK(empirical_fdp(none, theta) == 0.0);  // max(R,1) guard
    CHECK(empirical_power(none, theta).tp_count == 0);
    CHECK(empirical_power(none, theta).tp_proportion == 0.0);

    std::vector<std::uint8_t> no_signals(10, 0);
    CHECK(empirical_power(d, no_signals).tp_proportion == 0.0);  // m1 = 0 convention
    CHECK(empirical_fdp(d, no_signals) == 1.0);

    std::vector<std::uint8_t> all_signals(10, 1);
    CHECK(empirical_fdp(d, all_signals) == 0.0);

    std::vector<std::uint8_t> short_theta(9, 0);
    CHECK_THROWS_AS(empirical_fdp(d, short_theta), std::invalid_argument);
    CHECK_THROWS_AS(empirical_power(d, short_theta), std::invalid_argument);
}

TEST_CASE("run_experiment output is a pure function of config and seed") {
    ExperimentConfig cfg = small_config();
    cfg.dump_decisions = true;

    cfg.threads = 1;
    MetricsSummary a = run_experiment(cfg);
    MetricsSummary b = run_experiment(cfg);
    CHECK(metrics_to_csv(a) == metrics_to_csv(b));

    cfg.threads = 3;  // worker count must not change a single byte
    MetricsSummary c = run_experiment(cfg);
    CHECK(metrics_to_csv(a) == metrics_to_csv(c));
    REQUIRE(a.first_rep_decisions.size() == c.first_rep_decisions.size());
    for (std::size_t i = 0; i < a.first_rep_decisions.size(); ++i)
        CHECK(decisions_to_csv(a.first_rep_decisions[i], a.first_rep_p[i / cfg.methods.size()]) ==
              decisions_to_csv(c.first_rep_decisions[i], c.first_rep_p[i / cfg.methods.size()]));

    REQUIRE(a.rows.size() == cfg.methods.size());
    for (const MetricsRow& row : a.rows) {
        CHECK(row.sweep_param == "none");
        CHECK(row.fdr >= 0.0);
        CHECK(row.fdr <= 1.0);
        CHECK(row.power_prop >= 0.0);
        CHECK(row.power_prop <= 1.0);
        CHECK(row.fdr_se >= 0.0);
        CHECK(row.replications == 3);
    }
}

TEST_CASE("run_experiment sweeps replace the right knob") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {Method::bh};
    cfg.replications = 2;
    cfg.sweeps = {{"mu", {0.2, 3.0}}};
    MetricsSummary sweep_mu = run_experiment(cfg);
    REQUIRE(sweep_mu.rows.size() == 2);
    CHECK(sweep_mu.rows[0].sweep_param == "mu");
    CHECK(sweep_mu.rows[0].sweep_value == 0.2);
    CHECK(sweep_mu.rows[1].sweep_value == 3.0);
    // a much larger shift must yield much more power
    CHECK(sweep_mu.rows[1].power_prop > sweep_mu.rows[0].power_prop);

    cfg.sweeps = {{"region_pi", {0.2, 0.8}}};
    MetricsSummary sweep_pi = run_experiment(cfg);
    REQUIRE(sweep_pi.rows.size() == 2);
    CHECK(sweep_pi.rows[0].sweep_param == "region_pi");

    cfg.sweeps = {{"nope", {0.1}}};
    CHECK_THROWS_WITH(run_experiment(cfg),
                      Catch::Matchers::ContainsSubstring("sweep parameter"));
}

TEST_CASE("run_experiment validates its config") {
    ExperimentConfig cfg = small_config();
    cfg.alpha = 1.5;
    CHECK_THROWS_WITH(run_experiment(cfg),
                      Catch::Matchers::ContainsSubstring("alpha must lie in (0,1)"));
    cfg = small_config();
    cfg.n2 = 1;
    CHECK_THROWS_WITH(run_experiment(cfg), Catch::Matchers::ContainsSubstring("n2 must be >= 2"));
    cfg = small_config();
    cfg.methods.clear();
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("global-null sanity: every procedure keeps FDR near alpha") {
    // Runs the full pipeline (tau rule + CV bandwidths). The sample size must
    // be large enough that the normal-reference p-values are honest at the
    // alpha/m tail quantile BH probes under the global null, and the site
    // count large enough that a p-value's influence on its own weight fades.
    ExperimentConfig cfg;
    cfg.extents = {1000};
    cfg.regions.baseline = 0.0;  // pure null
    cfg.mu = 3.0 / std::sqrt(20.0);
    cfg.beta1 = {Beta1Spec::Mode::constant, 1.0 / std::sqrt(20.0), 0.0, 0.0};
    cfg.n1 = cfg.n2 = 400;
    cfg.alpha = 0.05;
    cfg.replications = 500;
    cfg.seed = 90210;
    cfg.methods = {Method::napa, Method::laws, Method::bh, Method::gap_lite,
                   Method::gap_then_laws};
    MetricsSummary s = run_experiment(cfg);
    for (const MetricsRow& row : s.rows) {
        INFO(method_name(row.method));
        CHECK(row.fdr >= 0.0);
        CHECK(row.fdr <= 0.07);
        CHECK(row.power_prop == 0.0);  // m1 = 0 by construction
    }
}

TEST_CASE("oracle_dominance_check with an uninformative auxiliary reduces exactly") {
    ExperimentConfig cfg;
    cfg.extents = {200};
    cfg.regions.baseline = 0.1;
    cfg.mu = 0.0;  // delta = 0 when beta1 = 0 too
    cfg.beta1 = {Beta1Spec::Mode::constant, 0.0, 0.0, 0.0};
    cfg.n1 = cfg.n2 = 30;
    cfg.alpha = 0.05;
    cfg.seed = 512;
    cfg.methods = {Method::napa};
    OracleDominanceReport rep = oracle_dominance_check(cfg, 25);
    REQUIRE(rep.napa.mfdr.size() == rep.laws.mfdr.size());
    for (std::size_t i = 0; i < rep.napa.mfdr.size(); ++i) {
        CHECK(rep.napa.mfdr[i] == rep.laws.mfdr[i]);
        CHECK(rep.napa.psi[i] == rep.laws.psi[i]);
    }
    CHECK(rep.t_napa == rep.t_laws);
}

TEST_CASE("oracle_dominance_check orders the oracle procedures on a signal design") {
    ExperimentConfig cfg;
    cfg.extents = {500};
    cfg.regions.baseline = 0.05;
    cfg.regions.boxes = {{{{101, 120}}, 0.8}, {{{301, 320}}, 0.6}};
    cfg.mu = 3.0 / std::sqrt(20.0);
    cfg.beta1 = {Beta1Spec::Mode::constant, 1.0 / std::sqrt(20.0), 0.0, 0.0};
    cfg.n1 = cfg.n2 = 100;
    cfg.alpha = 0.05;
    cfg.seed = 60601;
    cfg.methods = {Method::napa};
    OracleDominanceReport rep = oracle_dominance_check(cfg, 80);

    CHECK(rep.t_napa >= rep.t_laws);
    double se_m = std::sqrt(rep.napa.mfdr_se[rep.idx_t_laws] * rep.napa.mfdr_se[rep.idx_t_laws] +
                            rep.laws.mfdr_se[rep.idx_t_laws] * rep.laws.mfdr_se[rep.idx_t_laws]);
    CHECK(rep.mfdr_napa_at_t_laws() <= rep.mfdr_laws_at_t_laws() + 2.0 * se_m);
    CHECK(rep.psi_napa_at_t_napa() >= rep.psi_napa_at_t_laws() - 1e-12);
    double se_p = std::sqrt(rep.napa.psi_se[rep.idx_t_laws] * rep.napa.psi_se[rep.idx_t_laws] +
                            rep.laws.psi_se[rep.idx_t_laws] * rep.laws.psi_se[rep.idx_t_laws]);
    CHECK(rep.psi_napa_at_t_laws() >= rep.psi_laws_at_t_laws() - 2.0 * se_p);

    // pure-null configs have no oracle weights
    ExperimentConfig null_cfg = cfg;
    null_cfg.regions.boxes.clear();
    null_cfg.regions.baseline = 0.0;
    CHECK_THROWS_AS(oracle_dominance_check(null_cfg, 5), std::invalid_argument);
}
