#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "napa/normal.hpp"

namespace napa {

// Dense row-major matrix; rows are subjects, columns are sites in the grid's
// canonical order.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct TwoSampleDataset {
    Matrix group1;
    Matrix group2;

    std::size_t site_count() const { return group1.cols; }
    std::size_t n1() const { return group1.rows; }
    std::size_t n2() const { return group2.rows; }
};

inline void validate_dataset(const TwoSampleDataset& data) {
    if (data.group1.cols != data.group2.cols)
        throw std::invalid_argument("dataset: group matrices have different column counts");
    if (data.group1.cols == 0) throw std::invalid_argument("dataset: no sites");
    if (data.group1.rows < 2) throw std::invalid_argument("dataset: n1 must be >= 2");
    if (data.group2.rows < 2) throw std::invalid_argument("dataset: n2 must be >= 2");
    for (int d = 0; d < 2; ++d) {
        const Matrix& g = d == 0 ? data.group1 : data.group2;
        for (std::size_t k = 0; k < g.values.size(); ++k) {
            if (!std::isfinite(g.values[k]))
                throw std::invalid_argument(
                    "dataset: non-finite value in group " + std::to_string(d + 1) + " at row " +
                    std::to_string(k / g.cols) + ", site " + std::to_string(k % g.cols));
        }
    }
}

// Per-site two-sample summaries. t_stat is the studentized mean difference,
// u_stat the studentized weighted mean sum with plug-in kappa_hat, and
// p_value the two-sided normal-reference p-value of t_stat.
struct SiteStatistics {
    std::vector<double> mean1, mean2;
    std::vector<double> var1, var2;  // sample variances with divisor n_d
    std::vector<double> kappa_hat;
    std::vector<double> t_stat, u_stat;
    std::vector<double> p_value;

    std::size_t size() const { return p_value.size(); }
};

inline SiteStatistics compute_site_statistics(const TwoSampleDataset& data) {
    validate_dataset(data);
    const std::size_t m = data.site_count();
    const double n1 = static_cast<double>(data.n1());
    const double n2 = static_cast<double>(data.n2());

    SiteStatistics s;
    s.mean1.assign(m, 0.0);
    s.mean2.assign(m, 0.0);
    s.var1.assign(m, 0.0);
    s.var2.assign(m, 0.0);
    s.kappa_hat.resize(m);
    s.t_stat.resize(m);
    s.u_stat.resize(m);
    s.p_value.resize(m);

    auto accumulate = [m](const Matrix& g, std::vector<double>& mean, std::vector<double>& var) {
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double* row = g.values.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) mean[j] += row[j];
        }
        const double inv_n = 1.0 / static_cast<double>(g.rows);
        for (std::size_t j = 0; j < m; ++j) mean[j] *= inv_n;
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double* row = g.values.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) {
                double d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < m; ++j) var[j] *= inv_n;
    };
    accumulate(data.group1, s.mean1, s.var1);
    accumulate(data.group2, s.mean2, s.var2);

    for (std::size_t j = 0; j < m; ++j) {
        if (s.var1[j] <= 0.0)
            throw std::runtime_error("degenerate data: zero sample variance in group 1 at site " +
                                     std::to_string(j));
        if (s.var2[j] <= 0.0)
            throw std::runtime_error("degenerate data: zero sample variance in group 2 at site " +
                                     std::to_string(j));
        double kappa = (n2 * s.var1[j]) / (n1 * s.var2[j]);
        s.kappa_hat[j] = kappa;
        s.t_stat[j] = (s.mean1[j] - s.mean2[j]) / std::sqrt(s.var1[j] / n1 + s.var2[j] / n2);
        s.u_stat[j] = (s.mean1[j] + kappa * s.mean2[j]) /
                      std::sqrt(s.var1[j] / n1 + kappa * kappa * s.var2[j] / n2);
        s.p_value[j] = two_sided_pvalue(s.t_stat[j]);
    }
    return s;
}

}  // namespace napa
