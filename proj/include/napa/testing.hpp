#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "napa/grid.hpp"
#include "napa/statistics.hpp"
#include "napa/weights.hpp"

namespace napa {

enum class Method { napa, laws, bh, gap_lite, gap_then_laws };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::napa: return "napa";
        case Method::laws: return "laws";
        case Method::bh: return "bh";
        case Method::gap_lite: return "gap";
        case Method::gap_then_laws: return "gap-laws";
    }
    return "?";
}

inline Method parse_method(const std::string& name) {
    if (name == "napa") return Method::napa;
    if (name == "laws") return Method::laws;
    if (name == "bh") return Method::bh;
    if (name == "gap") return Method::gap_lite;
    if (name == "gap-laws") return Method::gap_then_laws;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected napa, laws, bh, gap, gap-laws)");
}

// Rejection decisions of one procedure run. threshold is the weighted
// p-value actually compared against (0 when nothing was rejected); rejected
// sites are exactly those with weighted_p <= threshold, and ties in the
// weighted p-values share fate by construction of the step-up rule.
struct DecisionSet {
    Method method = Method::bh;
    double threshold = 0.0;
    std::vector<double> weighted_p;
    std::vector<char> rejected;

    std::size_t rejection_count() const {
        std::size_t n = 0;
        for (char r : rejected) n += r ? 1 : 0;
        return n;
    }
};

// p_w = min(p / w, 1).
inline std::vector<double> weighted_pvalues(const std::vector<double>& p,
                                            const std::vector<double>& w) {
    if (p.size() != w.size())
        throw std::invalid_argument("weighted_pvalues: length mismatch");
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(w[i] > 0.0)) throw std::invalid_argument("weighted_pvalues: weights must be positive");
        out[i] = std::min(p[i] / w[i], 1.0);
    }
    return out;
}

namespace detail {

// Shared step-up core: rejects the k* smallest weighted p-values where
// k* = max{k : p_(k) < 1 and coef * p_(k) <= alpha * k}. Weighted p-values
// equal to one are never rejection candidates (a capped p-value carries no
// evidence), which also keeps the threshold strictly below 1.
inline DecisionSet stepup(Method method, const std::vector<double>& weighted_p, double coef,
                          double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0,1)");
    std::vector<double> sorted(weighted_p);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    std::size_t k_star = 0;
    for (std::size_t k = m; k-- > 0;) {
        if (sorted[k] >= 1.0) continue;
        if (coef * sorted[k] <= alpha * static_cast<double>(k + 1)) {
            k_star = k + 1;
            break;
        }
    }
    DecisionSet d;
    d.method = method;
    d.weighted_p = weighted_p;
    d.rejected.assign(m, 0);
    d.threshold = k_star > 0 ? sorted[k_star - 1] : 0.0;
    if (k_star > 0) {
        for (std::size_t i = 0; i < m; ++i) d.rejected[i] = weighted_p[i] <= d.threshold ? 1 : 0;
    }
    return d;
}

}  // namespace detail

// Data-driven threshold of the weighted multiple testing procedure: with
// S = sum of pi_hat, rejects the k* smallest weighted p-values where
// k* = max{k : S * p_(k) <= alpha * k}. This step-up realizes
//   sup{t : S * t / max(#{p_w <= t}, 1) <= alpha}
// exactly, because the estimated-FDP map is linear in t between jump points.
inline DecisionSet napa_threshold(const std::vector<double>& weighted_p,
                                  const std::vector<double>& pi_hat, double alpha,
                                  Method method = Method::napa) {
    if (weighted_p.size() != pi_hat.size())
        throw std::invalid_argument("napa_threshold: length mismatch");
    double s_pi = std::accumulate(pi_hat.begin(), pi_hat.end(), 0.0);
    if (!(s_pi > 0.0)) {
        // Unreachable with xi-truncated estimates; kept as a guard.
        DecisionSet d;
        d.method = method;
        d.weighted_p = weighted_p;
        d.rejected.resize(weighted_p.size());
        double thr = 0.0;
        for (std::size_t i = 0; i < weighted_p.size(); ++i) {
            d.rejected[i] = weighted_p[i] < 1.0 ? 1 : 0;
            if (d.rejected[i]) thr = std::max(thr, weighted_p[i]);
        }
        d.threshold = thr;
        return d;
    }
    return detail::stepup(method, weighted_p, s_pi, alpha);
}

// Benjamini-Hochberg step-up: k* = max{k : p_(k) <= alpha * k / m}.
inline DecisionSet bh_procedure(const std::vector<double>& p, double alpha) {
    return detail::stepup(Method::bh, p, static_cast<double>(p.size()), alpha);
}

// Full NAPA pipeline at a given tau and bandwidth: bivariate weight field,
// weighted p-values, data-driven threshold.
inline DecisionSet napa_procedure(const SiteStatistics& stats, const SpatialGrid& grid,
                                  double alpha, double tau, const BandwidthMatrix& bw,
                                  double xi = 1e-5, int threads = 0) {
    WeightField wf = estimate_pi_tau(stats, grid, tau, bw, xi, false, threads);
    std::vector<double> pw = weighted_pvalues(stats.p_value, wf.weights);
    return napa_threshold(pw, wf.pi_tau_hat, alpha, Method::napa);
}

// Spatial-only variant: the weight field ignores the auxiliary statistic.
inline DecisionSet laws_procedure(const SiteStatistics& stats, const SpatialGrid& grid,
                                  double alpha, double tau, const BandwidthMatrix& bw,
                                  double xi = 1e-5, int threads = 0) {
    WeightField wf = estimate_pi_tau(stats, grid, tau, bw, xi, true, threads);
    std::vector<double> pw = weighted_pvalues(stats.p_value, wf.weights);
    return napa_threshold(pw, wf.pi_tau_hat, alpha, Method::laws);
}

namespace detail {

struct GapGroups {
    std::vector<int> group;        // per site
    std::vector<std::size_t> size; // per group; may be zero under heavy ties
    std::vector<double> pi_g;      // Storey estimate per group (xi-truncated)
};

// Quantile partition of sites by |U| with ties assigned to the lower group,
// plus the per-group Storey estimate pi_g = 1 - #{p > tau in g} / ((1-tau) m_g).
inline GapGroups gap_partition(const std::vector<double>& p, const std::vector<double>& u,
                               double tau, int n_groups, double xi) {
    const std::size_t m = p.size();
    if (n_groups < 2) throw std::invalid_argument("gap: n_groups must be >= 2");
    if (m < static_cast<std::size_t>(n_groups))
        throw std::invalid_argument("gap: need at least n_groups sites");
    std::vector<double> abs_u(m);
    for (std::size_t i = 0; i < m; ++i) abs_u[i] = std::fabs(u[i]);
    std::vector<double> sorted(abs_u);
    std::sort(sorted.begin(), sorted.end());

    // Upper cut value of each group; a site belongs to the first group whose
    // cut is >= its |U|, which sends boundary ties downward.
    std::vector<double> cut(static_cast<std::size_t>(n_groups) - 1);
    for (int g = 0; g + 1 < n_groups; ++g) {
        std::size_t r = m * static_cast<std::size_t>(g + 1) / static_cast<std::size_t>(n_groups);
        cut[static_cast<std::size_t>(g)] = sorted[r - 1];
    }

    GapGroups out;
    out.group.resize(m);
    out.size.assign(static_cast<std::size_t>(n_groups), 0);
    std::vector<std::size_t> tail(static_cast<std::size_t>(n_groups), 0);
    for (std::size_t i = 0; i < m; ++i) {
        int g = n_groups - 1;
        for (int c = 0; c + 1 < n_groups; ++c) {
            if (abs_u[i] <= cut[static_cast<std::size_t>(c)]) {
                g = c;
                break;
            }
        }
        out.group[i] = g;
        ++out.size[static_cast<std::size_t>(g)];
        if (p[i] > tau) ++tail[static_cast<std::size_t>(g)];
    }
    out.pi_g.assign(static_cast<std::size_t>(n_groups), xi);
    for (int g = 0; g < n_groups; ++g) {
        auto gi = static_cast<std::size_t>(g);
        if (out.size[gi] == 0) continue;
        double raw = 1.0 - static_cast<double>(tail[gi]) /
                               ((1.0 - tau) * static_cast<double>(out.size[gi]));
        out.pi_g[gi] = std::clamp(raw, xi, 1.0 - xi);
    }
    return out;
}

}  // namespace detail

// Simplified grouped-weighting baseline: quantile groups of |U|, group-wise
// Storey weights, and the shared step-up with S = sum_g m_g pi_g.
inline DecisionSet gap_lite_procedure(const SiteStatistics& stats, double alpha, double tau,
                                      int n_groups = 3, double xi = 1e-5) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("gap_lite_procedure: tau must lie in (0,1)");
    detail::GapGroups groups = detail::gap_partition(stats.p_value, stats.u_stat, tau, n_groups, xi);
    const std::size_t m = stats.size();
    std::vector<double> w(m), pi_site(m);
    for (std::size_t i = 0; i < m; ++i) {
        double pi = groups.pi_g[static_cast<std::size_t>(groups.group[i])];
        pi_site[i] = pi;
        w[i] = pi / (1.0 - pi);
    }
    std::vector<double> pw = weighted_pvalues(stats.p_value, w);
    return napa_threshold(pw, pi_site, alpha, Method::gap_lite);
}

// Two-stage baseline: the group-weighted p-values from the grouped stage are
// treated as the raw p-value field for the spatial-only estimator and
// threshold. `tau` drives the grouping stage; the spatial stage re-screens
// its own input with the BH-at-`screen_level` rule, since the reweighting
// pushes group-null p-values toward 1 and the original cutoff no longer
// separates the tail of the new field.
inline DecisionSet gap_then_laws_procedure(const SiteStatistics& stats, const SpatialGrid& grid,
                                           double alpha, double tau, const BandwidthMatrix& bw,
                                           int n_groups = 3, double xi = 1e-5, int threads = 0,
                                           double screen_level = 0.9) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("gap_then_laws_procedure: tau must lie in (0,1)");
    detail::GapGroups groups = detail::gap_partition(stats.p_value, stats.u_stat, tau, n_groups, xi);
    const std::size_t m = stats.size();
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) {
        double pi = groups.pi_g[static_cast<std::size_t>(groups.group[i])];
        w[i] = pi / (1.0 - pi);
    }
    std::vector<double> pw_gap = weighted_pvalues(stats.p_value, w);
    double tau2 = select_tau(pw_gap, screen_level);
    WeightField wf =
        estimate_pi_tau_field(pw_gap, stats.u_stat, grid, tau2, bw, xi, true, threads);
    std::vector<double> pw = weighted_pvalues(pw_gap, wf.weights);
    DecisionSet d = napa_threshold(pw, wf.pi_tau_hat, alpha, Method::gap_then_laws);
    return d;
}

}  // namespace napa
