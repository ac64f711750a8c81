#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "napa/normal.hpp"
#include "napa/rng.hpp"
#include "napa/statistics.hpp"

using namespace napa;

namespace {

// Independent quadrature oracle for Phi: composite Simpson over the density,
// step 1e-3, giving error around 1e-14 per unit of integration length.
double phi_by_quadrature(double x) {
    double ax = std::fabs(x);
    auto dens = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
    std::size_t n = static_cast<std::size_t>(std::ceil(ax / 0.001));
    n += n % 2;  // Simpson needs an even panel count
    double integral = 0.0;
    if (n > 0) {
        double h = ax / static_cast<double>(n);
        integral = dens(0.0) + dens(ax);
        for (std::size_t k = 1; k < n; ++k)
            integral += dens(h * static_cast<double>(k)) * (k % 2 ? 4.0 : 2.0);
        integral *= h / 3.0;
    }
    return x >= 0.0 ? 0.5 + integral : 0.5 - integral;
}

}  // namespace

TEST_CASE("normal_cdf matches the quadrature oracle") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK_THAT(normal_cdf(1.959963985), Catch::Matchers::WithinAbs(0.975, 1e-9));
    for (double x : {-6.0, -3.2, -1.0, -0.1, 0.3, 1.0, 1.959963985, 2.5, 4.0, 6.0})
        CHECK_THAT(normal_cdf(x), Catch::Matchers::WithinAbs(phi_by_quadrature(x), 1e-12));
    RngStream rng(11);
    for (int i = 0; i < 50; ++i) {
        double x = 8.0 * (rng.uniform() - 0.5);
        CHECK_THAT(normal_cdf(-x), Catch::Matchers::WithinAbs(1.0 - normal_cdf(x), 1e-15));
    }
    CHECK_THROWS_AS(normal_cdf(std::nan("")), std::invalid_argument);
}

TEST_CASE("normal_quantile inverts normal_cdf") {
    for (double p : {1e-10, 1e-6, 0.01, 0.025, 0.3, 0.5, 0.7, 0.975, 0.99, 1.0 - 1e-9}) {
        double x = normal_quantile(p);
        CHECK_THAT(normal_cdf(x), Catch::Matchers::WithinAbs(p, 1e-13));
    }
    CHECK(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-15));
    CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
    CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("two_sided_pvalue") {
    CHECK(two_sided_pvalue(0.0) == 1.0);
    CHECK_THAT(two_sided_pvalue(1.959963985), Catch::Matchers::WithinAbs(0.05, 1e-8));
    CHECK_THAT(two_sided_pvalue(-1.959963985), Catch::Matchers::WithinAbs(0.05, 1e-8));
    RngStream rng(3);
    double prev_t = 0.0, prev_p = 1.0;
    for (int i = 0; i < 100; ++i) {
        double t = prev_t + 0.05 + 0.25 * rng.uniform();  // stays below erfc underflow
        double p = two_sided_pvalue(t);
        CHECK(p < prev_p);  // monotone decreasing in |t|
        prev_t = t;
        prev_p = p;
    }
    CHECK_THROWS_AS(two_sided_pvalue(std::nan("")), std::invalid_argument);
}

TEST_CASE("compute_site_statistics hand-checked example") {
    TwoSampleDataset data;
    data.group1 = Matrix(2, 1);
    data.group2 = Matrix(2, 1);
    data.group1.at(0, 0) = 0.0;
    data.group1.at(1, 0) = 2.0;
    data.group2.at(0, 0) = 0.0;
    data.group2.at(1, 0) = 2.0;
    SiteStatistics s = compute_site_statistics(data);
    CHECK(s.mean1[0] == 1.0);
    CHECK(s.mean2[0] == 1.0);
    CHECK(s.var1[0] == 1.0);  // divisor n_d
    CHECK(s.var2[0] == 1.0);
    CHECK(s.kappa_hat[0] == 1.0);
    CHECK(s.t_stat[0] == 0.0);
    CHECK(s.u_stat[0] == 2.0);
    CHECK(s.p_value[0] == 1.0);
}

TEST_CASE("identical groups give T = 0 and p = 1 everywhere") {
    TwoSampleDataset data;
    data.group1 = Matrix(3, 4);
    data.group2 = Matrix(3, 4);
    RngStream rng(5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double v = rng.normal();
            data.group1.at(i, j) = v;
            data.group2.at(i, j) = v;
        }
    SiteStatistics s = compute_site_statistics(data);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(s.t_stat[j] == 0.0);
        CHECK(s.p_value[j] == 1.0);
    }
}

TEST_CASE("degenerate and invalid data are rejected") {
    TwoSampleDataset data;
    data.group1 = Matrix(2, 3);
    data.group2 = Matrix(2, 3);
    RngStream rng(9);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            data.group1.at(i, j) = rng.normal();
            data.group2.at(i, j) = rng.normal();
        }
    data.group1.at(0, 2) = 1.0;
    data.group1.at(1, 2) = 1.0;  // zero variance at site 2
    CHECK_THROWS_WITH(compute_site_statistics(data),
                      Catch::Matchers::ContainsSubstring("site 2"));

    data.group1.at(1, 2) = std::nan("");
    CHECK_THROWS_AS(compute_site_statistics(data), std::invalid_argument);

    data.group1 = Matrix(1, 3);
    CHECK_THROWS_WITH(compute_site_statistics(data),
                      Catch::Matchers::ContainsSubstring("n1 must be >= 2"));
}

TEST_CASE("scaling both groups leaves T and p unchanged") {
    TwoSampleDataset data;
    data.group1 = Matrix(5, 8);
    data.group2 = Matrix(4, 8);
    RngStream rng(13);
    for (auto* g : {&data.group1, &data.group2})
        for (double& v : g->values) v = 1.0 + rng.normal();

    SiteStatistics base = compute_site_statistics(data);

    // power-of-two scale: every intermediate is exact, so T is bit-identical
    TwoSampleDataset scaled2 = data;
    for (auto* g : {&scaled2.group1, &scaled2.group2})
        for (double& v : g->values) v *= 2.0;
    SiteStatistics s2 = compute_site_statistics(scaled2);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(s2.t_stat[j] == base.t_stat[j]);
        CHECK(s2.p_value[j] == base.p_value[j]);
    }

    TwoSampleDataset scaled3 = data;
    for (auto* g : {&scaled3.group1, &scaled3.group2})
        for (double& v : g->values) v *= 3.0;
    SiteStatistics s3 = compute_site_statistics(scaled3);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK_THAT(s3.t_stat[j], Catch::Matchers::WithinAbs(base.t_stat[j], 1e-12));
        CHECK_THAT(s3.p_value[j], Catch::Matchers::WithinAbs(base.p_value[j], 1e-12));
    }
}

TEST_CASE("null calibration: p-values uniform, T and U nearly uncorrelated") {
    // exact null draw of the generative model: group 1 ~ N(0,1), group 2 ~ N(0,4)
    const std::size_t m = 5000;
    const std::size_t n = 100;
    TwoSampleDataset data;
    data.group1 = Matrix(n, m);
    data.group2 = Matrix(n, m);
    RngStream rng = RngStream::substream(20240229, {0});
    for (double& v : data.group1.values) v = rng.normal();
    for (double& v : data.group2.values) v = 2.0 * rng.normal();
    SiteStatistics s = compute_site_statistics(data);

    std::vector<double> sorted(s.p_value);
    std::sort(sorted.begin(), sorted.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double hi = static_cast<double>(i + 1) / m - sorted[i];
        double lo = sorted[i] - static_cast<double>(i) / m;
        ks = std::max(ks, std::max(hi, lo));
    }
    CHECK(ks < 0.03);

    double mt = 0, mu = 0;
    for (std::size_t i = 0; i < m; ++i) {
        mt += s.t_stat[i];
        mu += s.u_stat[i];
    }
    mt /= m;
    mu /= m;
    double stt = 0, suu = 0, stu = 0;
    for (std::size_t i = 0; i < m; ++i) {
        stt += (s.t_stat[i] - mt) * (s.t_stat[i] - mt);
        suu += (s.u_stat[i] - mu) * (s.u_stat[i] - mu);
        stu += (s.t_stat[i] - mt) * (s.u_stat[i] - mu);
    }
    double corr = stu / std::sqrt(stt * suu);
    CHECK(std::fabs(corr) < 0.05);
}
