#include "mtekit/error.hpp"
#include "mtekit/selection.hpp"

#include <Eigen/LU>
#include <cmath>
#include <doctest.h>
#include <random>

using namespace mtekit;

namespace {

struct Sample {
    Eigen::MatrixXd x;
    Eigen::VectorXd s;
};

Sample logit_sample(std::size_t n, double b0, double b1, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    Sample out{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const double x = nd(rng);
        out.x(i, 0) = x;
        out.s[i] = ud(rng) < 1.0 / (1.0 + std::exp(-(b0 + b1 * x))) ? 1.0 : 0.0;
    }
    return out;
}

double loglik(const Sample &d, double b0, double b1) {
    double ll = 0;
    for (Eigen::Index i = 0; i < d.s.size(); ++i) {
        const double eta = b0 + b1 * d.x(i, 0);
        ll += d.s[i] * eta - std::log1p(std::exp(eta));
    }
    return ll;
}

Dataset to_dataset(const Sample &d, const std::vector<std::string> &extra_names = {},
                   const std::vector<std::vector<double>> &extra = {}) {
    std::vector<ColumnRole> roles{{"y", Role::outcome}, {"s", Role::treatment}, {"x", Role::covariate}};
    std::vector<std::string> names{"y", "s", "x"};
    std::vector<std::vector<double>> cols{std::vector<double>(d.s.size(), 0.0),
                                          std::vector<double>(d.s.data(), d.s.data() + d.s.size()),
                                          std::vector<double>(d.x.data(), d.x.data() + d.x.rows())};
    for (std::size_t k = 0; k < extra.size(); ++k) {
        roles.push_back({extra_names[k], Role::instrument});
        names.push_back(extra_names[k]);
        cols.push_back(extra[k]);
    }
    return Dataset(RoleMap(roles), names, cols);
}

} // namespace

TEST_CASE("logit MLE matches a 2-D grid search") {
    Sample d = logit_sample(400, -0.3, 0.8, 11);
    LogitFit fit = fit_logit(d.x, d.s, {"x"});
    REQUIRE(fit.converged);
    // Coarse grid, then two refinements around the best cell.
    double c0 = 0, c1 = 0, half = 2.0;
    for (int level = 0; level < 3; ++level) {
        double best = -1e300, b0 = c0, b1 = c1;
        for (int i = -100; i <= 100; ++i)
            for (int j = -100; j <= 100; ++j) {
                const double a = c0 + half * i / 100.0, b = c1 + half * j / 100.0;
                const double ll = loglik(d, a, b);
                if (ll > best) best = ll, b0 = a, b1 = b;
            }
        c0 = b0;
        c1 = b1;
        half /= 50.0;
    }
    CHECK(std::abs(fit.coefficients[0] - c0) < 1e-3);
    CHECK(std::abs(fit.coefficients[1] - c1) < 1e-3);
    CHECK(fit.log_likelihood == doctest::Approx(loglik(d, fit.coefficients[0], fit.coefficients[1])).epsilon(1e-12));
}

TEST_CASE("standard errors come from the inverse information") {
    Sample d = logit_sample(2000, 0.2, -0.5, 5);
    LogitFit fit = fit_logit(d.x, d.s, {"x"});
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    for (Eigen::Index i = 0; i < d.s.size(); ++i) {
        const double p = logistic(fit.coefficients[0] + fit.coefficients[1] * d.x(i, 0));
        Eigen::Vector2d z(1.0, d.x(i, 0));
        info += p * (1 - p) * z * z.transpose();
    }
    Eigen::Matrix2d cov = info.inverse();
    CHECK(fit.standard_errors()[1] == doctest::Approx(std::sqrt(cov(1, 1))).epsilon(1e-6));
}

TEST_CASE("perfect separation is reported") {
    Eigen::MatrixXd x(6, 1);
    x << -3, -2, -1, 1, 2, 3;
    Eigen::VectorXd s(6);
    s << 0, 0, 0, 1, 1, 1;
    CHECK_THROWS_AS(fit_logit(x, s, {"x"}), SeparationError);
}

TEST_CASE("collinear regressors are named") {
    Sample d = logit_sample(100, 0, 1, 3);
    Eigen::MatrixXd x(100, 2);
    x.col(0) = d.x.col(0);
    x.col(1) = 2.0 * d.x.col(0);
    try {
        fit_logit(x, d.s, {"x", "x2"});
        FAIL("expected rank error");
    } catch (const RankError &e) {
        CHECK(std::string(e.what()).find("x2") != std::string::npos);
    }
}

TEST_CASE("average marginal derivatives") {
    Sample d = logit_sample(1500, 0.1, 0.7, 8);
    std::mt19937_64 rng(2);
    std::bernoulli_distribution coin(0.4);
    std::vector<double> dummy(1500);
    for (double &v : dummy) v = coin(rng) ? 1.0 : 0.0;
    Dataset data = to_dataset(d, {"d"}, {dummy});
    LogitFit fit = fit_logit(data, {"x", "d"});
    const auto &b = fit.coefficients;

    // Continuous: numerical derivative of the mean probability.
    auto mean_p = [&](double dx) {
        double sum = 0;
        for (std::size_t i = 0; i < 1500; ++i) sum += logistic(b[0] + b[1] * (d.x(i, 0) + dx) + b[2] * dummy[i]);
        return sum / 1500.0;
    };
    const double numeric = (mean_p(1e-6) - mean_p(-1e-6)) / 2e-6;
    CHECK(average_marginal_derivative(fit, data, "x") == doctest::Approx(numeric).epsilon(1e-6));

    // Indicator: mean discrete change.
    double change = 0;
    for (std::size_t i = 0; i < 1500; ++i)
        change += logistic(b[0] + b[1] * d.x(i, 0) + b[2]) - logistic(b[0] + b[1] * d.x(i, 0));
    CHECK(average_marginal_derivative(fit, data, "d") == doctest::Approx(change / 1500.0).epsilon(1e-12));
    CHECK_THROWS_AS(average_marginal_derivative(fit, data, "nope"), InputError);
}

TEST_CASE("likelihood-ratio test of excluded instruments") {
    Sample d = logit_sample(1000, 0.0, 0.5, 21);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    std::vector<double> z1(1000), z2(1000);
    for (auto &v : z1) v = nd(rng);
    for (auto &v : z2) v = nd(rng);
    Dataset data = to_dataset(d, {"z1", "z2"}, {z1, z2});
    LogitFit full = fit_logit(data, {"x", "z1", "z2"});
    LogitFit restricted = fit_logit(data, {"x"});
    auto lr = instrument_joint_test(full, restricted);
    CHECK(lr.df == 2);
    CHECK(lr.chi_square == doctest::Approx(2.0 * (full.log_likelihood - restricted.log_likelihood)));
    CHECK(lr.p_value == doctest::Approx(std::exp(-lr.chi_square / 2.0)).epsilon(1e-9)); // chi2 with 2 df
    CHECK_THROWS_AS(instrument_joint_test(restricted, full), InputError);
}

TEST_CASE("rescaling an instrument leaves propensity scores unchanged") {
    Sample d = logit_sample(800, 0.2, 0.4, 13);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    std::vector<double> z(800), z10(800);
    for (std::size_t i = 0; i < 800; ++i) {
        z[i] = nd(rng);
        z10[i] = 10.0 * z[i];
    }
    auto p1 = propensity(fit_logit(to_dataset(d, {"z"}, {z}), {"x", "z"}), to_dataset(d, {"z"}, {z}));
    auto p2 = propensity(fit_logit(to_dataset(d, {"z"}, {z10}), {"x", "z"}), to_dataset(d, {"z"}, {z10}));
    for (std::size_t i = 0; i < 800; ++i) CHECK(std::abs(p1.values[i] - p2.values[i]) < 1e-8);
}
