#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "napa/grid.hpp"
#include "napa/normal.hpp"
#include "napa/parallel.hpp"
#include "napa/rng.hpp"
#include "napa/statistics.hpp"
#include "napa/testing.hpp"
#include "napa/weights.hpp"

namespace napa {

// Non-null mean offset of group 1; either a fixed value or a fresh
// Uniform(lo, hi) draw per site, redrawn each replication.
struct Beta1Spec {
    enum class Mode { constant, uniform } mode = Mode::constant;
    double value = 0.0;  // constant mode
    double lo = 0.0, hi = 0.0;  // uniform mode
};

struct SweepSpec {
    std::string param;  // "mu" or "region_pi"
    std::vector<double> values;
};

struct ExperimentConfig {
    std::vector<int> extents;
    RegionSpec regions;
    double mu = 0.0;
    Beta1Spec beta1;
    double var1 = 1.0;
    double var2 = 4.0;
    int n1 = 0;
    int n2 = 0;
    double alpha = 0.05;
    int replications = 1;
    std::uint64_t seed = 1;
    std::vector<Method> methods;
    std::vector<SweepSpec> sweeps;
    double screen_level = 0.9;
    double xi = 1e-5;
    int n_groups = 3;
    std::optional<double> tau_override;
    std::optional<BandwidthMatrix> bw_override;
    bool dump_decisions = false;
    int threads = 0;
};

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.extents.empty()) throw std::invalid_argument("extents must be non-empty");
    for (int e : cfg.extents)
        if (e < 1) throw std::invalid_argument("extents must be positive");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0,1)");
    if (cfg.n1 < 2) throw std::invalid_argument("n1 must be >= 2");
    if (cfg.n2 < 2) throw std::invalid_argument("n2 must be >= 2");
    if (!(cfg.var1 > 0.0 && cfg.var2 > 0.0))
        throw std::invalid_argument("var1 and var2 must be positive");
    if (cfg.replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (cfg.methods.empty()) throw std::invalid_argument("methods must be non-empty");
    if (!(cfg.screen_level > 0.0 && cfg.screen_level < 1.0))
        throw std::invalid_argument("screen_level must lie in (0,1)");
    if (!(cfg.xi > 0.0 && cfg.xi < 0.5)) throw std::invalid_argument("xi must lie in (0,0.5)");
    if (cfg.n_groups < 2) throw std::invalid_argument("n_groups must be >= 2");
    if (cfg.tau_override && !(*cfg.tau_override > 0.0 && *cfg.tau_override < 1.0))
        throw std::invalid_argument("tau must lie in (0,1)");
    if (cfg.bw_override) validate_bandwidth(*cfg.bw_override);
    if (!(std::isfinite(cfg.mu))) throw std::invalid_argument("mu must be finite");
    for (const SweepSpec& s : cfg.sweeps) {
        if (s.param != "mu" && s.param != "region_pi")
            throw std::invalid_argument("sweep parameter must be mu or region_pi");
        if (s.values.empty()) throw std::invalid_argument("sweep values must be non-empty");
        for (double v : s.values) {
            if (!std::isfinite(v)) throw std::invalid_argument("sweep values must be finite");
            if (s.param == "region_pi" && !(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("region_pi sweep values must lie in [0,1]");
        }
    }
}

struct GeneratedData {
    TwoSampleDataset data;
    std::vector<std::uint8_t> theta;
    std::vector<double> beta1;
};

// Draws one replication of the two-group mixture model: theta(s) ~
// Bernoulli(pi(s)), group-1 observations N(theta beta1(s), var1), group-2
// observations N(theta (mu + beta1(s)), var2), all independent across sites
// and subjects. Draw order is fixed (beta1 field, theta field, group 1 rows,
// group 2 rows) so a given stream always yields the same dataset.
inline GeneratedData generate_dataset(const ExperimentConfig& cfg, const SpatialGrid& grid,
                                      const std::vector<double>& pi_field, RngStream& rng) {
    const std::size_t m = grid.site_count();
    GeneratedData out;
    out.beta1.resize(m);
    if (cfg.beta1.mode == Beta1Spec::Mode::constant) {
        std::fill(out.beta1.begin(), out.beta1.end(), cfg.beta1.value);
    } else {
        for (std::size_t s = 0; s < m; ++s)
            out.beta1[s] = cfg.beta1.lo + (cfg.beta1.hi - cfg.beta1.lo) * rng.uniform();
    }
    out.theta.resize(m);
    for (std::size_t s = 0; s < m; ++s) out.theta[s] = rng.uniform() < pi_field[s] ? 1 : 0;

    const double sd1 = std::sqrt(cfg.var1);
    const double sd2 = std::sqrt(cfg.var2);
    out.data.group1 = Matrix(static_cast<std::size_t>(cfg.n1), m);
    out.data.group2 = Matrix(static_cast<std::size_t>(cfg.n2), m);
    std::vector<double> mean1(m), mean2(m);
    for (std::size_t s = 0; s < m; ++s) {
        mean1[s] = out.theta[s] ? out.beta1[s] : 0.0;
        mean2[s] = out.theta[s] ? cfg.mu + out.beta1[s] : 0.0;
    }
    for (int i = 0; i < cfg.n1; ++i) {
        double* row = out.data.group1.values.data() + static_cast<std::size_t>(i) * m;
        for (std::size_t s = 0; s < m; ++s) row[s] = mean1[s] + sd1 * rng.normal();
    }
    for (int i = 0; i < cfg.n2; ++i) {
        double* row = out.data.group2.values.data() + static_cast<std::size_t>(i) * m;
        for (std::size_t s = 0; s < m; ++s) row[s] = mean2[s] + sd2 * rng.normal();
    }
    return out;
}

// FDP = #{rejected and null} / max(#rejected, 1).
inline double empirical_fdp(const DecisionSet& decisions, const std::vector<std::uint8_t>& theta) {
    if (decisions.rejected.size() != theta.size())
        throw std::invalid_argument("empirical_fdp: length mismatch");
    std::size_t rejected = 0, false_rejected = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (decisions.rejected[i]) {
            ++rejected;
            if (!theta[i]) ++false_rejected;
        }
    }
    return static_cast<double>(false_rejected) / std::max<std::size_t>(rejected, 1);
}

struct PowerResult {
    long tp_count = 0;
    double tp_proportion = 0.0;  // 0 by convention when there are no signals
};

inline PowerResult empirical_power(const DecisionSet& decisions,
                                   const std::vector<std::uint8_t>& theta) {
    if (decisions.rejected.size() != theta.size())
        throw std::invalid_argument("empirical_power: length mismatch");
    long tp = 0, m1 = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i]) {
            ++m1;
            if (decisions.rejected[i]) ++tp;
        }
    }
    PowerResult r;
    r.tp_count = tp;
    r.tp_proportion = m1 > 0 ? static_cast<double>(tp) / static_cast<double>(m1) : 0.0;
    return r;
}

// ---- oracle quantities of the generative model -----------------------------

// Population kappa of the model: (n2 var1) / (n1 var2).
inline double oracle_kappa(const ExperimentConfig& cfg) {
    return (static_cast<double>(cfg.n2) * cfg.var1) / (static_cast<double>(cfg.n1) * cfg.var2);
}

// Non-null mean of U at population kappa:
// {beta1 + kappa (mu + beta1)} / sqrt(var1/n1 + kappa^2 var2/n2).
inline double oracle_u_shift(const ExperimentConfig& cfg, double beta1) {
    double kappa = oracle_kappa(cfg);
    double denom = std::sqrt(cfg.var1 / cfg.n1 + kappa * kappa * cfg.var2 / cfg.n2);
    return (beta1 + kappa * (cfg.mu + beta1)) / denom;
}

// Non-null mean of T: -mu / sqrt(var1/n1 + var2/n2).
inline double oracle_t_shift(const ExperimentConfig& cfg) {
    return -cfg.mu / std::sqrt(cfg.var1 / cfg.n1 + cfg.var2 / cfg.n2);
}

// Pr{p > tau | theta = 1} under the normal model: with z = Phi^{-1}(1 - tau/2)
// and the non-null T mean d, Phi(z - d) - Phi(-z - d).
inline double oracle_tail_nonnull(double tau, double t_shift) {
    double z = normal_quantile(1.0 - 0.5 * tau);
    return normal_cdf(z - t_shift) - normal_cdf(-z - t_shift);
}

// Oracle screened posterior pi_tau(s, u) = pi(s,u) {1 - Pr(p > tau | H1)/(1 - tau)},
// with pi(s,u) the oracle posterior of the auxiliary model.
inline double oracle_pi_tau(double pi_su, double tau, double tail_nonnull) {
    return pi_su * (1.0 - tail_nonnull / (1.0 - tau));
}

// ---- replicated experiments -------------------------------------------------

struct MetricsRow {
    std::string sweep_param;  // "none" when the experiment has no sweep
    double sweep_value = 0.0;
    Method method = Method::bh;
    double fdr = 0.0, fdr_se = 0.0;
    double power_prop = 0.0, power_prop_se = 0.0;
    double power_raw = 0.0;  // mean true-positive count
    int replications = 0;
};

struct MetricsSummary {
    std::vector<MetricsRow> rows;
    // Decision sets of the first replication per (sweep point, method) in row
    // order, plus that replication's raw p-values per sweep point; retained
    // only when the config requests decision dumps.
    std::vector<DecisionSet> first_rep_decisions;
    std::vector<std::vector<double>> first_rep_p;
};

namespace detail {

struct SweepPoint {
    std::string param = "none";
    double value = 0.0;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg) {
    std::vector<SweepPoint> pts;
    for (const SweepSpec& s : cfg.sweeps)
        for (double v : s.values) pts.push_back({s.param, v});
    if (pts.empty()) pts.push_back({});
    return pts;
}

inline ExperimentConfig apply_sweep_point(const ExperimentConfig& cfg, const SweepPoint& pt) {
    ExperimentConfig out = cfg;
    if (pt.param == "mu") {
        out.mu = pt.value;
    } else if (pt.param == "region_pi") {
        for (RegionBox& box : out.regions.boxes) box.value = pt.value;
    }
    return out;
}

inline bool needs_bandwidths(const std::vector<Method>& methods) {
    for (Method m : methods)
        if (m == Method::napa || m == Method::laws || m == Method::gap_then_laws) return true;
    return false;
}

inline DecisionSet run_method(Method method, const SiteStatistics& stats, const SpatialGrid& grid,
                              double alpha, double tau, const BandwidthMatrix& bw, double xi,
                              int n_groups, int threads) {
    switch (method) {
        case Method::napa: return napa_procedure(stats, grid, alpha, tau, bw, xi, threads);
        case Method::laws: return laws_procedure(stats, grid, alpha, tau, bw, xi, threads);
        case Method::bh: return bh_procedure(stats.p_value, alpha);
        case Method::gap_lite: return gap_lite_procedure(stats, alpha, tau, n_groups, xi);
        case Method::gap_then_laws:
            return gap_then_laws_procedure(stats, grid, alpha, tau, bw, n_groups, xi, threads);
    }
    throw std::logic_error("run_method: unknown method");
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double se_of_mean(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace detail

// Runs the replicated experiment over every sweep point and requested method.
// Replication r of sweep point q uses the substream (seed, {q, r}), so the
// summary is a pure function of the config and invariant to the worker count.
// A failing replication aborts the experiment with its coordinates attached.
inline MetricsSummary run_experiment(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    SpatialGrid grid = build_grid(cfg.extents);
    const auto points = detail::sweep_points(cfg);
    const int reps = cfg.replications;
    const bool need_bw = !cfg.bw_override && detail::needs_bandwidths(cfg.methods);

    MetricsSummary summary;
    for (std::size_t q = 0; q < points.size(); ++q) {
        ExperimentConfig pt_cfg = detail::apply_sweep_point(cfg, points[q]);
        std::vector<double> pi_field = evaluate_region_field(grid, pt_cfg.regions);

        const std::size_t n_methods = cfg.methods.size();
        std::vector<double> fdp(n_methods * static_cast<std::size_t>(reps));
        std::vector<double> prop(n_methods * static_cast<std::size_t>(reps));
        std::vector<double> tp(n_methods * static_cast<std::size_t>(reps));
        std::vector<DecisionSet> first(cfg.dump_decisions ? n_methods : 0);
        std::vector<double> first_p;

        parallel_for(static_cast<std::size_t>(reps), cfg.threads, [&](std::size_t r) {
            try {
                RngStream rng = RngStream::substream(cfg.seed, {q, r});
                GeneratedData gen = generate_dataset(pt_cfg, grid, pi_field, rng);
                SiteStatistics stats = compute_site_statistics(gen.data);
                double tau = cfg.tau_override ? *cfg.tau_override
                                              : select_tau(stats.p_value, cfg.screen_level);
                BandwidthMatrix bw =
                    cfg.bw_override ? *cfg.bw_override
                                    : (need_bw ? select_bandwidths(stats, grid, tau, 1)
                                               : BandwidthMatrix{});
                for (std::size_t mi = 0; mi < n_methods; ++mi) {
                    DecisionSet d = detail::run_method(cfg.methods[mi], stats, grid, cfg.alpha,
                                                       tau, bw, cfg.xi, cfg.n_groups, 1);
                    std::size_t slot = mi * static_cast<std::size_t>(reps) + r;
                    fdp[slot] = empirical_fdp(d, gen.theta);
                    PowerResult pw = empirical_power(d, gen.theta);
                    prop[slot] = pw.tp_proportion;
                    tp[slot] = static_cast<double>(pw.tp_count);
                    if (cfg.dump_decisions && r == 0) first[mi] = std::move(d);
                }
                if (cfg.dump_decisions && r == 0) first_p = stats.p_value;
            } catch (const std::exception& e) {
                throw std::runtime_error("replication " + std::to_string(r) + " of sweep point " +
                                         std::to_string(q) + " (seed " + std::to_string(cfg.seed) +
                                         ") failed: " + e.what());
            }
        });

        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            auto begin = static_cast<std::ptrdiff_t>(mi * static_cast<std::size_t>(reps));
            std::vector<double> f(fdp.begin() + begin, fdp.begin() + begin + reps);
            std::vector<double> p(prop.begin() + begin, prop.begin() + begin + reps);
            std::vector<double> t(tp.begin() + begin, tp.begin() + begin + reps);
            MetricsRow row;
            row.sweep_param = points[q].param;
            row.sweep_value = points[q].value;
            row.method = cfg.methods[mi];
            row.fdr = detail::mean_of(f);
            row.fdr_se = detail::se_of_mean(f, row.fdr);
            row.power_prop = detail::mean_of(p);
            row.power_prop_se = detail::se_of_mean(p, row.power_prop);
            row.power_raw = detail::mean_of(t);
            row.replications = reps;
            summary.rows.push_back(std::move(row));
            if (cfg.dump_decisions)
                summary.first_rep_decisions.push_back(std::move(first[mi]));
        }
        if (cfg.dump_decisions) summary.first_rep_p.push_back(std::move(first_p));
    }
    return summary;
}

// ---- oracle dominance check --------------------------------------------------

// Monte-Carlo comparison of the oracle-weighted procedures at a shared
// threshold grid: NAPA weights from the oracle posterior pi(s,u), LAWS
// weights pi(s)/(1-pi(s)). Reports mFDR and Psi curves with standard errors
// (delta method for the mFDR ratio), and the largest grid thresholds whose
// estimated mFDR stays within alpha.
struct OracleCurve {
    std::vector<double> mfdr, mfdr_se;
    std::vector<double> psi, psi_se;
};

struct OracleDominanceReport {
    double alpha = 0.0;
    int replications = 0;
    std::vector<double> thresholds;
    OracleCurve napa, laws;
    std::size_t idx_t_napa = 0, idx_t_laws = 0;
    double t_napa = 0.0, t_laws = 0.0;

    double mfdr_napa_at_t_laws() const { return napa.mfdr[idx_t_laws]; }
    double mfdr_laws_at_t_laws() const { return laws.mfdr[idx_t_laws]; }
    double psi_napa_at_t_napa() const { return napa.psi[idx_t_napa]; }
    double psi_napa_at_t_laws() const { return napa.psi[idx_t_laws]; }
    double psi_laws_at_t_laws() const { return laws.psi[idx_t_laws]; }
};

namespace detail {

struct CurveAccum {
    // Per-threshold sums over replications of V (false rejections), R (all
    // rejections), TP, and the second moments needed for standard errors.
    std::vector<double> v, r, tp, vv, rr, vr, tp2;
    void init(std::size_t n) {
        v.assign(n, 0.0); r.assign(n, 0.0); tp.assign(n, 0.0);
        vv.assign(n, 0.0); rr.assign(n, 0.0); vr.assign(n, 0.0); tp2.assign(n, 0.0);
    }
    void add(std::size_t i, double vi, double ri, double tpi) {
        v[i] += vi; r[i] += ri; tp[i] += tpi;
        vv[i] += vi * vi; rr[i] += ri * ri; vr[i] += vi * ri; tp2[i] += tpi * tpi;
    }
};

// Counts rejections at every grid threshold via one sorted pass.
inline void tally_curve(const std::vector<double>& weighted_p,
                        const std::vector<std::uint8_t>& theta,
                        const std::vector<double>& thresholds, CurveAccum& acc) {
    const std::size_t m = weighted_p.size();
    std::vector<std::size_t> ord(m);
    std::iota(ord.begin(), ord.end(), std::size_t{0});
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
        return weighted_p[a] < weighted_p[b];
    });
    std::size_t k = 0;
    double v = 0.0, r = 0.0, tp = 0.0;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        while (k < m && weighted_p[ord[k]] <= thresholds[ti]) {
            r += 1.0;
            if (theta[ord[k]]) tp += 1.0;
            else v += 1.0;
            ++k;
        }
        acc.add(ti, v, r, tp);
    }
}

inline OracleCurve finish_curve(const CurveAccum& acc, int reps) {
    const double n = static_cast<double>(reps);
    OracleCurve c;
    const std::size_t g = acc.v.size();
    c.mfdr.resize(g); c.mfdr_se.resize(g); c.psi.resize(g); c.psi_se.resize(g);
    for (std::size_t i = 0; i < g; ++i) {
        double vbar = acc.v[i] / n, rbar = acc.r[i] / n, tbar = acc.tp[i] / n;
        c.psi[i] = tbar;
        double tvar = reps > 1 ? std::max(0.0, (acc.tp2[i] - n * tbar * tbar) / (n - 1.0)) : 0.0;
        c.psi_se[i] = std::sqrt(tvar / n);
        if (rbar <= 0.0) {
            c.mfdr[i] = 0.0;
            c.mfdr_se[i] = 0.0;
            continue;
        }
        double g_ratio = vbar / rbar;
        c.mfdr[i] = g_ratio;
        if (reps > 1) {
            double svv = std::max(0.0, (acc.vv[i] - n * vbar * vbar) / (n - 1.0));
            double srr = std::max(0.0, (acc.rr[i] - n * rbar * rbar) / (n - 1.0));
            double svr = (acc.vr[i] - n * vbar * rbar) / (n - 1.0);
            double var = (svv - 2.0 * g_ratio * svr + g_ratio * g_ratio * srr) / (n * rbar * rbar);
            c.mfdr_se[i] = std::sqrt(std::max(0.0, var));
        } else {
            c.mfdr_se[i] = 0.0;
        }
    }
    return c;
}

}  // namespace detail

inline OracleDominanceReport oracle_dominance_check(const ExperimentConfig& cfg,
                                                    int replications,
                                                    std::size_t threshold_grid_size = 400) {
    ExperimentConfig base = cfg;
    base.replications = replications;
    validate_experiment_config(base);
    SpatialGrid grid = build_grid(cfg.extents);
    std::vector<double> pi_field = evaluate_region_field(grid, cfg.regions);
    const std::size_t m = grid.site_count();
    for (double pi : pi_field)
        if (!(pi > 0.0 && pi < 1.0))
            throw std::invalid_argument(
                "oracle_dominance_check: pi(s) must be interior for oracle weights");

    OracleDominanceReport report;
    report.alpha = cfg.alpha;
    report.replications = replications;
    report.thresholds = log_spaced(1e-6, 1.0, static_cast<int>(threshold_grid_size));

    std::vector<detail::CurveAccum> acc_napa(1), acc_laws(1);
    acc_napa[0].init(report.thresholds.size());
    acc_laws[0].init(report.thresholds.size());

    std::vector<double> w_laws(m);
    for (std::size_t s = 0; s < m; ++s) w_laws[s] = pi_field[s] / (1.0 - pi_field[s]);

    for (int r = 0; r < replications; ++r) {
        RngStream rng = RngStream::substream(cfg.seed, {0xd0u, static_cast<std::uint64_t>(r)});
        GeneratedData gen = generate_dataset(cfg, grid, pi_field, rng);
        SiteStatistics stats = compute_site_statistics(gen.data);

        std::vector<double> w_napa(m);
        for (std::size_t s = 0; s < m; ++s) {
            double delta = oracle_u_shift(cfg, gen.beta1[s]);
            double post = oracle_posterior(pi_field[s], stats.u_stat[s], delta);
            post = std::clamp(post, 1e-12, 1.0 - 1e-12);
            w_napa[s] = post / (1.0 - post);
        }
        std::vector<double> pw_napa = weighted_pvalues(stats.p_value, w_napa);
        std::vector<double> pw_laws = weighted_pvalues(stats.p_value, w_laws);
        detail::tally_curve(pw_napa, gen.theta, report.thresholds, acc_napa[0]);
        detail::tally_curve(pw_laws, gen.theta, report.thresholds, acc_laws[0]);
    }

    report.napa = detail::finish_curve(acc_napa[0], replications);
    report.laws = detail::finish_curve(acc_laws[0], replications);

    auto pick = [&](const OracleCurve& c) {
        std::size_t best = 0;
        bool found = false;
        for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
            if (c.mfdr[i] <= cfg.alpha) {
                best = i;
                found = true;
            }
        }
        return found ? best : std::size_t{0};
    };
    report.idx_t_laws = pick(report.laws);
    report.idx_t_napa = pick(report.napa);
    report.t_laws = report.thresholds[report.idx_t_laws];
    report.t_napa = report.thresholds[report.idx_t_napa];
    return report;
}

}  // namespace napa
