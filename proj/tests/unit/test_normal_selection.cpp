#include "mtekit/error.hpp"
#include "mtekit/normal_selection.hpp"

#include <cmath>
#include <doctest.h>
#include <random>

using namespace mtekit;

namespace {

struct Truth {
    double g0 = 0.2, gx = 0.3, gz = 0.8;
    double b10 = 1.0, b1x = 0.5, b00 = 0.6, b0x = 0.3;
    double s1 = 0.8, s0 = 0.6, r1 = -0.4, r0 = 0.3;
};

struct Draw {
    Eigen::VectorXd y;
    std::vector<double> s;
    Eigen::MatrixXd x, z;
};

Draw draw(const Truth &t, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    const auto m = static_cast<Eigen::Index>(n);
    Draw d{Eigen::VectorXd(m), std::vector<double>(n), Eigen::MatrixXd(m, 1), Eigen::MatrixXd(m, 1)};
    for (Eigen::Index i = 0; i < m; ++i) {
        const double x = nd(rng), z = nd(rng), u = nd(rng), e1 = nd(rng), e0 = nd(rng);
        const double u1 = t.s1 * (t.r1 * u + std::sqrt(1 - t.r1 * t.r1) * e1);
        const double u0 = t.s0 * (t.r0 * u + std::sqrt(1 - t.r0 * t.r0) * e0);
        const bool treated = t.g0 + t.gx * x + t.gz * z - u > 0;
        d.x(i, 0) = x;
        d.z(i, 0) = z;
        d.s[static_cast<std::size_t>(i)] = treated ? 1.0 : 0.0;
        d.y[i] = treated ? t.b10 + t.b1x * x + u1 : t.b00 + t.b0x * x + u0;
    }
    return d;
}

Eigen::MatrixXd with_one(const Eigen::MatrixXd &m) {
    Eigen::MatrixXd out(m.rows(), m.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(m.cols()) = m;
    return out;
}

NormalSelectionFit fit(const Draw &d) { return fit_normal_selection(d.y, d.s, d.x, d.z, {"x"}, {"z"}); }

double phi_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

} // namespace

TEST_CASE("log-likelihood matches a direct per-observation evaluation") {
    Draw d = draw(Truth{}, 300, 1);
    Eigen::MatrixXd x = with_one(d.x), zx(300, 3);
    zx << Eigen::VectorXd::Ones(300), d.x, d.z;
    Eigen::VectorXd theta(11);
    theta << 0.1, 0.2, 0.7, 0.9, 0.4, 0.5, 0.2, std::log(0.7), std::log(0.5), std::atanh(-0.3), std::atanh(0.2);
    double expected = 0;
    for (Eigen::Index i = 0; i < 300; ++i) {
        const double index = theta[0] + theta[1] * d.x(i, 0) + theta[2] * d.z(i, 0);
        if (d.s[static_cast<std::size_t>(i)] == 1.0) {
            const double e = (d.y[i] - theta[3] - theta[4] * d.x(i, 0)) / 0.7;
            expected += -0.5 * std::log(2 * M_PI) - 0.5 * e * e - std::log(0.7) +
                        std::log(phi_cdf((index - -0.3 * e) / std::sqrt(1 - 0.09)));
        } else {
            const double e = (d.y[i] - theta[5] - theta[6] * d.x(i, 0)) / 0.5;
            expected += -0.5 * std::log(2 * M_PI) - 0.5 * e * e - std::log(0.5) +
                        std::log(phi_cdf(-(index - 0.2 * e) / std::sqrt(1 - 0.04)));
        }
    }
    CHECK(normal_selection_loglik(theta, d.y, d.s, x, zx, nullptr) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradient agrees with central differences") {
    Draw d = draw(Truth{}, 400, 2);
    Eigen::MatrixXd x = with_one(d.x), zx(400, 3);
    zx << Eigen::VectorXd::Ones(400), d.x, d.z;
    Eigen::VectorXd theta(11);
    theta << 0.3, 0.1, 0.6, 0.8, 0.6, 0.4, 0.3, std::log(0.9), std::log(0.4), std::atanh(-0.5), std::atanh(0.4);
    Eigen::VectorXd grad;
    normal_selection_loglik(theta, d.y, d.s, x, zx, &grad);
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp[j] += 1e-6;
        tm[j] -= 1e-6;
        const double numeric = (normal_selection_loglik(tp, d.y, d.s, x, zx, nullptr) -
                                normal_selection_loglik(tm, d.y, d.s, x, zx, nullptr)) /
                               2e-6;
        CHECK(grad[j] == doctest::Approx(numeric).epsilon(1e-5));
    }
}

TEST_CASE("extreme indices keep the likelihood finite") {
    Draw d = draw(Truth{}, 50, 3);
    Eigen::MatrixXd x = with_one(d.x), zx(50, 3);
    zx << Eigen::VectorXd::Ones(50), d.x, 40.0 * d.z;
    Eigen::VectorXd theta(11);
    theta << 0, 0, 5, 1, 0.5, 0.6, 0.3, 0, 0, 0.5, -0.5;
    Eigen::VectorXd grad;
    const double ll = normal_selection_loglik(theta, d.y, d.s, x, zx, &grad);
    CHECK(std::isfinite(ll));
    CHECK(grad.allFinite());
}

TEST_CASE("MTE at the median is the observable gap and the slope is the covariance gap") {
    Draw d = draw(Truth{}, 3000, 4);
    NormalSelectionFit f = fit(d);
    Eigen::VectorXd x(1);
    x << 0.7;
    const double gap = f.beta1[0] - f.beta0[0] + 0.7 * (f.beta1[1] - f.beta0[1]);
    CHECK(f.mte(x, 0.5) == gap);
    const double q = normal_quantile(0.9);
    CHECK(f.mte(x, 0.9) == doctest::Approx(gap + (f.rho1 * f.sigma1 - f.rho0 * f.sigma0) * q).epsilon(1e-13));
    CHECK(normal_cdf(q) == doctest::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("propensity is the probit of the selection index") {
    Draw d = draw(Truth{}, 2000, 5);
    NormalSelectionFit f = fit(d);
    Eigen::MatrixXd zx(2, 2);
    zx << 0.5, -1.0, 0.0, 2.0;
    auto p = f.propensity(zx);
    CHECK(p[0] == doctest::Approx(phi_cdf(f.gamma[0] + 0.5 * f.gamma[1] - f.gamma[2])).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(phi_cdf(f.gamma[0] + 2.0 * f.gamma[2])).epsilon(1e-14));
}

TEST_CASE("no selection on unobservables gives correlations near zero and a flat curve") {
    Truth t;
    t.r1 = 0.0;
    t.r0 = 0.0;
    Draw d = draw(t, 5000, 6);
    NormalSelectionFit f = fit(d);
    CHECK(std::abs(f.rho1) <= 3.0 * f.rho1_se());
    CHECK(std::abs(f.rho0) <= 3.0 * f.rho0_se());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    CHECK(std::abs(f.mte(x, 0.9) - f.mte(x, 0.1)) < 0.1);
    CHECK(f.warnings.empty());
}

TEST_CASE("parameters are recovered across replications") {
    const Truth t;
    int all_within = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        Draw d = draw(t, 3000, 500 + rep);
        NormalSelectionFit f = fit(d);
        auto g = f.gamma_se(), b1 = f.beta1_se(), b0 = f.beta0_se();
        bool ok = std::abs(f.gamma[0] - t.g0) <= 3 * g[0] && std::abs(f.gamma[1] - t.gx) <= 3 * g[1] &&
                  std::abs(f.gamma[2] - t.gz) <= 3 * g[2] && std::abs(f.beta1[0] - t.b10) <= 3 * b1[0] &&
                  std::abs(f.beta1[1] - t.b1x) <= 3 * b1[1] && std::abs(f.beta0[0] - t.b00) <= 3 * b0[0] &&
                  std::abs(f.beta0[1] - t.b0x) <= 3 * b0[1] && std::abs(f.sigma1 - t.s1) <= 3 * f.sigma1_se() &&
                  std::abs(f.sigma0 - t.s0) <= 3 * f.sigma0_se() && std::abs(f.rho1 - t.r1) <= 3 * f.rho1_se() &&
                  std::abs(f.rho0 - t.r0) <= 3 * f.rho0_se();
        if (ok) ++all_within;
        CHECK(f.gradient_norm < 1e-3);
    }
    CHECK(all_within >= 17);
}

TEST_CASE("dataset overload uses covariates and instruments") {
    Draw d = draw(Truth{}, 1500, 7);
    std::vector<double> y(d.y.data(), d.y.data() + 1500), x(d.x.data(), d.x.data() + 1500), z(d.z.data(), d.z.data() + 1500);
    Dataset data(RoleMap({{"y", Role::outcome}, {"s", Role::treatment}, {"x", Role::covariate}, {"z", Role::instrument}}),
                 {"y", "s", "x", "z"}, {y, d.s, x, z});
    NormalSelectionFit a = fit(d), b = fit_normal_selection(data);
    CHECK((a.theta - b.theta).norm() == 0.0);
    REQUIRE(b.selection_names.size() == 3);
    CHECK(b.selection_names[2] == "z");
    CHECK(b.outcome_names[1] == "x");
}

TEST_CASE("iteration cap reports the gradient") {
    Draw d = draw(Truth{}, 1000, 8);
    NormalSelectionOptions opt;
    opt.max_iterations = 1;
    try {
        fit_normal_selection(d.y, d.s, d.x, d.z, {"x"}, {"z"}, opt);
        FAIL("expected a convergence error");
    } catch (const ConvergenceError &e) {
        CHECK(std::string(e.what()).find("gradient") != std::string::npos);
    }
}
