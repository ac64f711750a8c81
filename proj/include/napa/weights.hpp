#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "napa/grid.hpp"
#include "napa/parallel.hpp"
#include "napa/rng.hpp"
#include "napa/statistics.hpp"

namespace napa {

// Encodes the 2x2 bandwidth matrix H = [[h_s^2, rho h_s h_u],
//                                       [rho h_s h_u, h_u^2]]
// acting on the pair (spatial distance, auxiliary distance).
struct BandwidthMatrix {
    double h_s = 1.0;
    double h_u = 1.0;
    double rho = 0.0;
};

inline void validate_bandwidth(const BandwidthMatrix& bw) {
    if (!(bw.h_s > 0.0 && bw.h_u > 0.0 && std::fabs(bw.rho) < 1.0) || !std::isfinite(bw.h_s) ||
        !std::isfinite(bw.h_u) || !std::isfinite(bw.rho))
        throw std::invalid_argument("bandwidth matrix must be positive definite "
                                    "(h_s > 0, h_u > 0, |rho| < 1)");
}

// Normalized kernel weight v_H = K_H(ds, du) / K_H(0, 0) for the Gaussian
// kernel: exp(-z' H^{-1} z / 2) with z = (ds, du). Equals 1 at the origin.
inline double kernel_weight(const BandwidthMatrix& bw, double ds, double du) {
    validate_bandwidth(bw);
    ds = std::fabs(ds);
    du = std::fabs(du);
    double c = 1.0 - bw.rho * bw.rho;
    double a = ds / bw.h_s;
    double b = du / bw.h_u;
    double q = (a * a - 2.0 * bw.rho * a * b + b * b) / c;
    return std::exp(-0.5 * q);
}

// Screening level: the BH cutoff p-value at `screen_level`, i.e. the largest
// p-value rejected by the step-up rule p_(k) <= screen_level * k / m. Falls
// back to 0.5 when nothing is rejected, when the cutoff is not interior, or
// when the cutoff rests on fewer than 1% of the sites - a cutoff carried by a
// handful of extreme order statistics is noise, and screening at it hands
// those very sites their own weight boost.
inline double select_tau(const std::vector<double>& p_values, double screen_level = 0.9) {
    if (p_values.empty()) throw std::invalid_argument("select_tau: empty p-value vector");
    if (!(screen_level > 0.0 && screen_level < 1.0))
        throw std::invalid_argument("select_tau: screen_level must lie in (0,1)");
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("select_tau: p-values must lie in [0,1]");
    std::vector<double> sorted(p_values);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const std::size_t min_rejections =
        std::max<std::size_t>(1, static_cast<std::size_t>((m + 99) / 100));
    for (std::size_t k = m; k-- > 0;) {
        if (sorted[k] <= screen_level * static_cast<double>(k + 1) / static_cast<double>(m)) {
            double tau = sorted[k];
            if (tau > 0.0 && tau < 1.0 && k + 1 >= min_rejections) return tau;
            break;
        }
    }
    return 0.5;
}

namespace detail {

// Quadratic-form coefficients of the kernel exponent plus the pruning radii
// implied by the sum truncation: Q = a_ss ds^2 + a_su ds|du| + a_uu du^2 and
// pairs with Q > 36 (weight < exp(-18)) are skipped. Since
// Q >= (ds/h_s)^2 / (1+|rho|) and likewise in du, a pair can be ruled out
// once ds > 6 h_s sqrt(1+|rho|) or |du| > 6 h_u sqrt(1+|rho|).
struct KernelCoeffs {
    double a_ss, a_su, a_uu;
    double r_s, r_u;
    bool bivariate;
};

constexpr double kMaxQuadForm = 36.0;

inline KernelCoeffs kernel_coeffs(const BandwidthMatrix& bw, bool spatial_only) {
    validate_bandwidth(bw);
    KernelCoeffs k{};
    if (spatial_only) {
        k.a_ss = 1.0 / (bw.h_s * bw.h_s);
        k.a_su = 0.0;
        k.a_uu = 0.0;
        k.r_s = 6.0 * bw.h_s;
        k.r_u = std::numeric_limits<double>::infinity();
        k.bivariate = false;
    } else {
        double c = 1.0 - bw.rho * bw.rho;
        k.a_ss = 1.0 / (bw.h_s * bw.h_s * c);
        k.a_uu = 1.0 / (bw.h_u * bw.h_u * c);
        k.a_su = -2.0 * bw.rho / (bw.h_s * bw.h_u * c);
        double expand = std::sqrt(1.0 + std::fabs(bw.rho));
        k.r_s = 6.0 * bw.h_s * expand;
        k.r_u = 6.0 * bw.h_u * expand;
        k.bivariate = true;
    }
    return k;
}

struct KernelSums {
    std::vector<double> all;      // sum of v over every source site
    std::vector<double> flagged;  // sum of v over flagged source sites
};

// Kernel sums over source sites for each target site. Picks between a
// spatial-box traversal and a u-sorted window traversal based on which prunes
// more; both apply the Q > 36 truncation, so each sum carries an absolute
// error of at most m * exp(-18) relative to the untruncated kernel sum.
// Output depends only on the inputs, never on `threads`.
inline KernelSums kernel_sums(const SpatialGrid& grid, const std::vector<double>& u,
                              const std::vector<char>& flags, const BandwidthMatrix& bw,
                              bool spatial_only, const std::vector<std::size_t>& targets,
                              int threads) {
    const std::size_t m = grid.site_count();
    const std::size_t b = grid.extents.size();
    const KernelCoeffs kc = kernel_coeffs(bw, spatial_only);
    const double* coords = grid.coords.data();
    const double* uv = u.data();
    const char* fl = flags.data();

    KernelSums out;
    out.all.assign(targets.size(), 0.0);
    out.flagged.assign(targets.size(), 0.0);

    // Expected spatial-box traversal size per target.
    double box_size = 1.0;
    for (std::size_t k = 0; k < b; ++k) {
        double span = std::min(2.0 * std::floor(kc.r_s) + 1.0,
                               2.0 * static_cast<double>(grid.extents[k]) - 1.0);
        box_size *= span;
        if (box_size > 1e18) break;
    }

    // Expected u-window traversal size per target (m when r_u cannot prune).
    std::vector<std::uint32_t> order;
    double u_window = static_cast<double>(m);
    if (kc.bivariate) {
        order.resize(m);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t x, std::uint32_t y) { return uv[x] < uv[y]; });
        if (std::isfinite(kc.r_u)) {
            std::size_t lo = 0, hi = 0;
            double total = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                double ui = uv[order[i]];
                while (uv[order[lo]] < ui - kc.r_u) ++lo;
                while (hi < m && uv[order[hi]] <= ui + kc.r_u) ++hi;
                total += static_cast<double>(hi - lo);
            }
            u_window = total / static_cast<double>(m);
        }
    }

    const bool use_spatial = box_size <= u_window;

    if (use_spatial) {
        // Precompute the offset table once: lattice offsets within the
        // pruning ball, with their distances and index deltas.
        std::vector<std::int64_t> stride(b, 1);
        for (std::size_t k = b; k-- > 1;) stride[k - 1] = stride[k] * grid.extents[k];
        int radius_cap = static_cast<int>(std::min(kc.r_s, 2.0e9));
        std::vector<int> lo(b), hi(b);
        for (std::size_t k = 0; k < b; ++k) {
            int r = std::min(radius_cap, grid.extents[k] - 1);
            lo[k] = -r;
            hi[k] = r;
        }
        std::vector<std::int64_t> off_idx;
        std::vector<double> off_ds, off_dsq;
        std::vector<int> off_delta;
        std::vector<int> d(lo.begin(), lo.end());
        const double r_s_sq = kc.r_s * kc.r_s;
        bool done = false;
        while (!done) {
            double dsq = 0.0;
            for (std::size_t k = 0; k < b; ++k) dsq += static_cast<double>(d[k]) * d[k];
            if (dsq <= r_s_sq) {
                std::int64_t idx = 0;
                for (std::size_t k = 0; k < b; ++k) idx += d[k] * stride[k];
                off_idx.push_back(idx);
                off_ds.push_back(std::sqrt(dsq));
                off_dsq.push_back(dsq);
                off_delta.insert(off_delta.end(), d.begin(), d.end());
            }
            std::size_t k = b;
            while (true) {
                if (k == 0) {
                    done = true;
                    break;
                }
                --k;
                if (++d[k] <= hi[k]) break;
                d[k] = lo[k];
            }
        }
        const std::size_t n_off = off_idx.size();
        parallel_for(targets.size(), threads, [&](std::size_t ti) {
            const std::size_t i = targets[ti];
            const double* ci = coords + i * b;
            const double ui = uv[i];
            double sum_all = 0.0, sum_flag = 0.0;
            for (std::size_t o = 0; o < n_off; ++o) {
                const int* dd = off_delta.data() + o * b;
                bool ok = true;
                for (std::size_t k = 0; k < b; ++k) {
                    double c = ci[k] + dd[k];
                    if (c < 1.0 || c > static_cast<double>(grid.extents[k])) {
                        ok = false;
                        break;
                    }
                }
                if (!ok) continue;
                const std::size_t j =
                    static_cast<std::size_t>(static_cast<std::int64_t>(i) + off_idx[o]);
                double q = kc.a_ss * off_dsq[o];
                if (kc.bivariate) {
                    double du = std::fabs(ui - uv[j]);
                    q += kc.a_su * off_ds[o] * du + kc.a_uu * du * du;
                }
                if (q > kMaxQuadForm) continue;
                double w = std::exp(-0.5 * q);
                sum_all += w;
                if (fl[j]) sum_flag += w;
            }
            out.all[ti] = sum_all;
            out.flagged[ti] = sum_flag;
        });
        return out;
    }

    if (kc.bivariate) {
        // u-sorted window traversal: self term, then outward sweeps that stop
        // once |du| exceeds the pruning radius.
        std::vector<std::uint32_t> pos(m);
        for (std::size_t r = 0; r < m; ++r) pos[order[r]] = static_cast<std::uint32_t>(r);
        const double r_s_sq = kc.r_s * kc.r_s;
        parallel_for(targets.size(), threads, [&](std::size_t ti) {
            const std::size_t i = targets[ti];
            const double* ci = coords + i * b;
            const double ui = uv[i];
            double sum_all = 1.0, sum_flag = fl[i] ? 1.0 : 0.0;
            auto visit = [&](std::size_t j, double du) {
                double dsq = 0.0;
                const double* cj = coords + j * b;
                for (std::size_t k = 0; k < b; ++k) {
                    double dc = ci[k] - cj[k];
                    dsq += dc * dc;
                }
                if (dsq > r_s_sq) return;
                double q = kc.a_ss * dsq + kc.a_su * std::sqrt(dsq) * du + kc.a_uu * du * du;
                if (q > kMaxQuadForm) return;
                double w = std::exp(-0.5 * q);
                sum_all += w;
                if (fl[j]) sum_flag += w;
            };
            const std::size_t r = pos[i];
            for (std::size_t k = r; k-- > 0;) {
                const std::size_t j = order[k];
                double du = ui - uv[j];
                if (du > kc.r_u) break;
                if (j != i) visit(j, du);
            }
            for (std::size_t k = r + 1; k < m; ++k) {
                const std::size_t j = order[k];
                double du = uv[j] - ui;
                if (du > kc.r_u) break;
                if (j != i) visit(j, du);
            }
            out.all[ti] = sum_all;
            out.flagged[ti] = sum_flag;
        });
        return out;
    }

    // Spatial-only with a window wider than the grid: plain scan.
    const double r_s_sq = kc.r_s * kc.r_s;
    parallel_for(targets.size(), threads, [&](std::size_t ti) {
        const std::size_t i = targets[ti];
        const double* ci = coords + i * b;
        double sum_all = 0.0, sum_flag = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double dsq = 0.0;
            const double* cj = coords + j * b;
            for (std::size_t k = 0; k < b; ++k) {
                double dc = ci[k] - cj[k];
                dsq += dc * dc;
            }
            if (dsq > r_s_sq) continue;
            double q = kc.a_ss * dsq;
            if (q > kMaxQuadForm) continue;
            double w = std::exp(-0.5 * q);
            sum_all += w;
            if (fl[j]) sum_flag += w;
        }
        out.all[ti] = sum_all;
        out.flagged[ti] = sum_flag;
    });
    return out;
}

inline std::vector<std::size_t> all_sites(std::size_t m) {
    std::vector<std::size_t> t(m);
    std::iota(t.begin(), t.end(), std::size_t{0});
    return t;
}

}  // namespace detail

// Screened posterior non-null probability estimates and the weights derived
// from them. pi_tau_hat is truncated into [xi, 1-xi] and
// weights[i] = pi_tau_hat[i] / (1 - pi_tau_hat[i]).
struct WeightField {
    double tau = 0.0;
    BandwidthMatrix bandwidth;
    double xi = 1e-5;
    std::vector<double> pi_tau_hat;
    std::vector<double> weights;
};

// Kernel estimator of the screened posterior non-null probability:
//   pi_tau(s) = 1 - sum_{p(s') > tau} v_H(s,s') / [(1-tau) sum_{s'} v_H(s,s')]
// where v_H acts on (||s-s'||, |u-u'|). Both sums include the focal site.
// With spatial_only the auxiliary coordinate is ignored and the kernel
// reduces to the univariate Gaussian in ||s-s'|| with bandwidth h_s.
inline WeightField estimate_pi_tau_field(const std::vector<double>& p,
                                         const std::vector<double>& u, const SpatialGrid& grid,
                                         double tau, const BandwidthMatrix& bw, double xi = 1e-5,
                                         bool spatial_only = false, int threads = 0) {
    const std::size_t m = grid.site_count();
    if (p.size() != m || u.size() != m)
        throw std::invalid_argument("estimate_pi_tau: input length does not match grid");
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("estimate_pi_tau: tau must lie in (0,1)");
    if (!(xi > 0.0 && xi < 0.5))
        throw std::invalid_argument("estimate_pi_tau: xi must lie in (0,0.5)");

    std::vector<char> tail(m);
    for (std::size_t i = 0; i < m; ++i) tail[i] = p[i] > tau ? 1 : 0;
    detail::KernelSums sums = detail::kernel_sums(grid, u, tail, bw, spatial_only,
                                                  detail::all_sites(m), threads);

    WeightField field;
    field.tau = tau;
    field.bandwidth = bw;
    if (spatial_only) field.bandwidth.rho = 0.0;
    field.xi = xi;
    field.pi_tau_hat.resize(m);
    field.weights.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        double raw = 1.0 - sums.flagged[i] / ((1.0 - tau) * sums.all[i]);
        double pi = std::clamp(raw, xi, 1.0 - xi);
        field.pi_tau_hat[i] = pi;
        field.weights[i] = pi / (1.0 - pi);
    }
    return field;
}

inline WeightField estimate_pi_tau(const SiteStatistics& stats, const SpatialGrid& grid,
                                   double tau, const BandwidthMatrix& bw, double xi = 1e-5,
                                   bool spatial_only = false, int threads = 0) {
    return estimate_pi_tau_field(stats.p_value, stats.u_stat, grid, tau, bw, xi, spatial_only,
                                 threads);
}

// ---- bandwidth selection -------------------------------------------------

struct BandwidthGrid {
    std::vector<double> hs_values;
    std::vector<double> hu_values;
};

inline double u_standard_deviation(const std::vector<double>& u) {
    double mean = 0.0;
    for (double v : u) mean += v;
    mean /= static_cast<double>(u.size());
    double ss = 0.0;
    for (double v : u) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(u.size()));
}

inline std::vector<double> log_spaced(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    if (n == 1 || hi <= lo) {
        std::fill(v.begin(), v.end(), lo);
        return v;
    }
    double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = std::exp(llo + (lhi - llo) * i / (n - 1));
    return v;
}

// Candidate bandwidths: 8 log-spaced h_s values spanning [0.5, max-extent/4]
// and 8 log-spaced h_u values spanning [0.1, 4] x sd(U).
inline BandwidthGrid bandwidth_search_grid(const SpatialGrid& grid, const SiteStatistics& stats,
                                           int n_hs = 8, int n_hu = 8) {
    double sd = u_standard_deviation(stats.u_stat);
    if (!(sd > 1e-12))
        throw std::runtime_error("degenerate auxiliary statistic: U has zero variance across sites");
    int max_extent = *std::max_element(grid.extents.begin(), grid.extents.end());
    BandwidthGrid g;
    g.hs_values = log_spaced(0.5, std::max(0.25 * max_extent, 0.5), n_hs);
    g.hu_values = log_spaced(0.1 * sd, 4.0 * sd, n_hu);
    return g;
}

// Deterministic systematic subsample of target sites for the cross-validation
// score; sources are never subsampled. Keeps the search O(m) per candidate at
// large m while remaining a pure function of m.
inline std::vector<std::size_t> cv_target_sites(std::size_t m, std::size_t cap = 1000) {
    std::size_t stride = (m + cap - 1) / cap;
    if (stride < 1) stride = 1;
    std::vector<std::size_t> t;
    t.reserve(m / stride + 1);
    for (std::size_t i = 0; i < m; i += stride) t.push_back(i);
    return t;
}

// A bandwidth candidate is unusable when some site's leave-one-out kernel
// mass is this small: with n sites of effective mass the screening fraction
// sits at 0 with probability about tau^n, and a zero fraction saturates the
// estimate at pi = 1 - xi, handing the site a weight of order 1/xi and
// destroying error control. Mass 25 pushes that saturation probability below
// 1e-3 for the tau values the screening rule produces. Such candidates score
// +infinity.
constexpr double kMinCvNeighborhoodMass = 25.0;

// Leave-one-out squared-error score of the kernel-weighted neighborhood
// average of the binary response 1{p > tau}, evaluated over `targets`.
// Degenerate candidates (smallest LOO kernel mass under
// kMinCvNeighborhoodMass) score +infinity.
inline double loo_cv_score(const std::vector<double>& p, const std::vector<double>& u,
                           const SpatialGrid& grid, double tau, const BandwidthMatrix& bw,
                           const std::vector<std::size_t>& targets, int threads = 0) {
    const std::size_t m = grid.site_count();
    std::vector<char> y(m);
    for (std::size_t i = 0; i < m; ++i) y[i] = p[i] > tau ? 1 : 0;
    detail::KernelSums sums = detail::kernel_sums(grid, u, y, bw, false, targets, threads);
    double score = 0.0;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        double yi = y[targets[ti]];
        double den = sums.all[ti] - 1.0;
        if (den < kMinCvNeighborhoodMass)
            return std::numeric_limits<double>::infinity();
        double pred = (sums.flagged[ti] - yi) / den;
        double e = yi - pred;
        score += e * e;
    }
    return score / static_cast<double>(targets.size());
}

// Sample correlation between ||s - s'|| and |u - u'| over site pairs, used as
// the kernel's cross term. All pairs when there are at most `max_pairs`,
// otherwise a uniform subsample drawn from a fixed internal stream so the
// estimate is reproducible. Clipped to [-0.95, 0.95].
inline double estimate_pair_correlation(const std::vector<double>& u, const SpatialGrid& grid,
                                        std::size_t max_pairs = 100000) {
    const std::size_t m = grid.site_count();
    if (m < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    std::size_t n = 0;
    auto add = [&](std::size_t i, std::size_t j) {
        double ds = spatial_distance(grid, i, j);
        double du = std::fabs(u[i] - u[j]);
        sx += ds;
        sy += du;
        sxx += ds * ds;
        syy += du * du;
        sxy += ds * du;
        ++n;
    };
    const double total_pairs = 0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
    if (total_pairs <= static_cast<double>(max_pairs)) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) add(i, j);
    } else {
        RngStream stream(mix64(0x9c0de5eedull ^ static_cast<std::uint64_t>(m)));
        while (n < max_pairs) {
            std::size_t i = static_cast<std::size_t>(stream.below(m));
            std::size_t j = static_cast<std::size_t>(stream.below(m));
            if (i == j) continue;
            add(i, j);
        }
    }
    double nn = static_cast<double>(n);
    double cov = sxy / nn - (sx / nn) * (sy / nn);
    double vx = sxx / nn - (sx / nn) * (sx / nn);
    double vy = syy / nn - (sy / nn) * (sy / nn);
    if (!(vx > 0.0) || !(vy > 0.0)) return 0.0;
    double rho = cov / std::sqrt(vx * vy);
    return std::clamp(rho, -0.95, 0.95);
}

// Bandwidth selection: rho from the pairwise distance correlation, then
// (h_s, h_u) minimizing the leave-one-out CV score over the search grid.
// Ties go to the larger (smoother) candidate.
inline BandwidthMatrix select_bandwidths(const SiteStatistics& stats, const SpatialGrid& grid,
                                         double tau, int threads = 0) {
    const std::size_t m = grid.site_count();
    if (m < 10) throw std::invalid_argument("select_bandwidths: need at least 10 sites");
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("select_bandwidths: tau must lie in (0,1)");
    BandwidthGrid cand = bandwidth_search_grid(grid, stats);
    double rho = estimate_pair_correlation(stats.u_stat, grid);
    std::vector<std::size_t> targets = cv_target_sites(m);

    const std::size_t n_hs = cand.hs_values.size();
    const std::size_t n_hu = cand.hu_values.size();
    std::vector<double> scores(n_hs * n_hu);
    parallel_for(n_hs * n_hu, threads, [&](std::size_t idx) {
        BandwidthMatrix bw{cand.hs_values[idx / n_hu], cand.hu_values[idx % n_hu], rho};
        scores[idx] = loo_cv_score(stats.p_value, stats.u_stat, grid, tau, bw, targets, 1);
    });

    std::size_t best = 0;
    for (std::size_t idx = 1; idx < scores.size(); ++idx)
        if (scores[idx] <= scores[best]) best = idx;
    return BandwidthMatrix{cand.hs_values[best / n_hu], cand.hu_values[best % n_hu], rho};
}

// Posterior non-null probability under a two-component normal model for the
// auxiliary statistic: U ~ N(0,1) under the null and N(delta,1) under the
// alternative, mixed with prior pi_s. Evaluated through the log-likelihood
// ratio so extreme u stay stable.
inline double oracle_posterior(double pi_s, double u, double delta) {
    if (!(std::isfinite(pi_s) && std::isfinite(u) && std::isfinite(delta)))
        throw std::invalid_argument("oracle_posterior: non-finite input");
    if (!(pi_s > 0.0 && pi_s < 1.0))
        throw std::invalid_argument("oracle_posterior: pi_s must lie in (0,1)");
    if (delta == 0.0) return pi_s;
    double a = std::log((1.0 - pi_s) / pi_s) - (delta * u - 0.5 * delta * delta);
    if (a >= 0.0) {
        double e = std::exp(-a);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(a));
}

}  // namespace napa
