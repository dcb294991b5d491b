#include "mtekit/normal_selection.hpp"
#include "mtekit/error.hpp"
#include "mtekit/linear.hpp"
#include "linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mtekit {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log Phi(a) and the inverse Mills ratio phi(a)/Phi(a), stable far into the lower tail.
void log_cdf_and_mills(double a, double &log_cdf, double &mills) {
    if (a > -30.0) {
        const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
        log_cdf = std::log(cdf);
        mills = std::exp(-0.5 * a * a - kLogSqrt2Pi - log_cdf);
    } else {
        // Asymptotic series Phi(a) ~ phi(a)/(-a) (1 - 1/a^2 + 3/a^4).
        const double a2 = a * a;
        const double series = 1.0 - 1.0 / a2 + 3.0 / (a2 * a2);
        log_cdf = -0.5 * a2 - kLogSqrt2Pi - std::log(-a) + std::log(series);
        mills = -a / series;
    }
}

struct Layout {
    Eigen::Index kz, kx;
    Eigen::Index gamma() const { return 0; }
    Eigen::Index beta1() const { return kz; }
    Eigen::Index beta0() const { return kz + kx; }
    Eigen::Index log_sigma1() const { return kz + 2 * kx; }
    Eigen::Index log_sigma0() const { return kz + 2 * kx + 1; }
    Eigen::Index eta1() const { return kz + 2 * kx + 2; }
    Eigen::Index eta0() const { return kz + 2 * kx + 3; }
    Eigen::Index size() const { return kz + 2 * kx + 4; }
};

double se_at(const Eigen::MatrixXd &cov, Eigen::Index j) {
    return cov.size() ? std::sqrt(cov(j, j)) : std::numeric_limits<double>::quiet_NaN();
}

} // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("normal quantile needs a probability strictly inside (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double normal_selection_loglik(const Eigen::VectorXd &theta, const Eigen::VectorXd &y, std::span<const double> treatment,
                               const Eigen::MatrixXd &x, const Eigen::MatrixXd &z, Eigen::VectorXd *gradient) {
    const Layout at{z.cols(), x.cols()};
    const auto gamma = theta.segment(at.gamma(), at.kz);
    const auto beta1 = theta.segment(at.beta1(), at.kx);
    const auto beta0 = theta.segment(at.beta0(), at.kx);
    const double sigma1 = std::exp(theta[at.log_sigma1()]), sigma0 = std::exp(theta[at.log_sigma0()]);
    const double rho1 = std::tanh(theta[at.eta1()]), rho0 = std::tanh(theta[at.eta0()]);
    const double r1 = std::sqrt(1.0 - rho1 * rho1), r0 = std::sqrt(1.0 - rho0 * rho0);

    Eigen::VectorXd zg = z * gamma;
    Eigen::VectorXd xb1 = x * beta1, xb0 = x * beta0;
    if (gradient) gradient->setZero(at.size());

    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double log_cdf = 0.0, mills = 0.0;
        if (treatment[static_cast<std::size_t>(i)] == 1.0) {
            const double e = (y[i] - xb1[i]) / sigma1;
            const double a = (zg[i] - rho1 * e) / r1;
            log_cdf_and_mills(a, log_cdf, mills);
            ll += -0.5 * e * e - kLogSqrt2Pi - theta[at.log_sigma1()] + log_cdf;
            if (gradient) {
                auto &g = *gradient;
                g.segment(at.gamma(), at.kz) += (mills / r1) * z.row(i).transpose();
                g.segment(at.beta1(), at.kx) += (e / sigma1 + mills * rho1 / (r1 * sigma1)) * x.row(i).transpose();
                g[at.log_sigma1()] += e * e - 1.0 + mills * rho1 * e / r1;
                g[at.eta1()] += mills * (rho1 * zg[i] - e) / r1;
            }
        } else {
            const double e = (y[i] - xb0[i]) / sigma0;
            const double b = (rho0 * e - zg[i]) / r0;
            log_cdf_and_mills(b, log_cdf, mills);
            ll += -0.5 * e * e - kLogSqrt2Pi - theta[at.log_sigma0()] + log_cdf;
            if (gradient) {
                auto &g = *gradient;
                g.segment(at.gamma(), at.kz) -= (mills / r0) * z.row(i).transpose();
                g.segment(at.beta0(), at.kx) += (e / sigma0 - mills * rho0 / (r0 * sigma0)) * x.row(i).transpose();
                g[at.log_sigma0()] += e * e - 1.0 - mills * rho0 * e / r0;
                g[at.eta0()] += mills * (e - rho0 * zg[i]) / r0;
            }
        }
    }
    return ll;
}

NormalSelectionFit fit_normal_selection(const Eigen::VectorXd &y, std::span<const double> treatment,
                                        const Eigen::MatrixXd &covariates, const Eigen::MatrixXd &instruments,
                                        const std::vector<std::string> &covariate_names,
                                        const std::vector<std::string> &instrument_names,
                                        const NormalSelectionOptions &options) {
    const Eigen::Index n = y.size();
    if (static_cast<std::size_t>(n) != treatment.size() || covariates.rows() != n || instruments.rows() != n)
        throw InputError("normal selection inputs must have the same rows");
    if (instruments.cols() < 1) throw InputError("normal selection model needs at least one instrument");

    NormalSelectionFit fit;
    fit.n_obs = static_cast<std::size_t>(n);
    fit.outcome_names = {kIntercept};
    fit.outcome_names.insert(fit.outcome_names.end(), covariate_names.begin(), covariate_names.end());
    fit.selection_names = fit.outcome_names;
    fit.selection_names.insert(fit.selection_names.end(), instrument_names.begin(), instrument_names.end());

    Eigen::MatrixXd x = detail::with_intercept(covariates);
    Eigen::MatrixXd z(n, x.cols() + instruments.cols());
    z << x, instruments;
    detail::require_full_rank(z, fit.selection_names, "normal selection equation");

    std::vector<Eigen::Index> rows1, rows0;
    for (Eigen::Index i = 0; i < n; ++i) (treatment[static_cast<std::size_t>(i)] == 1.0 ? rows1 : rows0).push_back(i);
    if (rows1.size() < static_cast<std::size_t>(x.cols()) + 2 || rows0.size() < static_cast<std::size_t>(x.cols()) + 2)
        throw InputError("normal selection model needs more observations than outcome coefficients in each arm");

    const Layout at{z.cols(), x.cols()};
    Eigen::VectorXd theta(at.size());

    // Starting values: logit coefficients rescaled to the probit metric, per-arm OLS, zero correlations.
    Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(treatment.data(), n);
    LogitFit logit = fit_logit(z.rightCols(z.cols() - 1), s, std::vector<std::string>(fit.selection_names.begin() + 1, fit.selection_names.end()));
    theta.segment(at.gamma(), at.kz) = logit.coefficients / 1.6;
    auto arm = [&](const std::vector<Eigen::Index> &rows, Eigen::Index beta_at, Eigen::Index log_sigma_at) {
        Eigen::MatrixXd xa(static_cast<Eigen::Index>(rows.size()), x.cols());
        Eigen::VectorXd ya(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            xa.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
            ya[static_cast<Eigen::Index>(r)] = y[rows[r]];
        }
        detail::require_full_rank(xa, fit.outcome_names, "normal selection outcome equation");
        Eigen::VectorXd b = xa.colPivHouseholderQr().solve(ya);
        theta.segment(beta_at, at.kx) = b;
        const double var = (ya - xa * b).squaredNorm() / static_cast<double>(rows.size());
        theta[log_sigma_at] = 0.5 * std::log(std::max(var, 1e-12));
    };
    arm(rows1, at.beta1(), at.log_sigma1());
    arm(rows0, at.beta0(), at.log_sigma0());
    theta[at.eta1()] = 0.0;
    theta[at.eta0()] = 0.0;

    auto loglik = [&](const Eigen::VectorXd &t, Eigen::VectorXd *g) {
        return normal_selection_loglik(t, y, treatment, x, z, g);
    };
    auto hessian = [&](const Eigen::VectorXd &t) {
        const Eigen::Index k = t.size();
        Eigen::MatrixXd h(k, k);
        Eigen::VectorXd gp, gm;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double step = 1e-5 * std::max(1.0, std::abs(t[j]));
            Eigen::VectorXd tp = t, tm = t;
            tp[j] += step;
            tm[j] -= step;
            loglik(tp, &gp);
            loglik(tm, &gm);
            h.col(j) = (gp - gm) / (2.0 * step);
        }
        return Eigen::MatrixXd(0.5 * (h + h.transpose()));
    };

    Eigen::VectorXd grad;
    double ll = loglik(theta, &grad);
    int iter = 0;
    bool converged = false;
    for (; iter < options.max_iterations; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            converged = true;
            break;
        }
        Eigen::MatrixXd info = -hessian(theta);
        // Levenberg-style ridge until the information matrix is positive definite.
        double ridge = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        while (llt.info() != Eigen::Success) {
            ridge = ridge == 0.0 ? 1e-6 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
            llt.compute(info + ridge * Eigen::MatrixXd::Identity(info.rows(), info.cols()));
        }
        Eigen::VectorXd step = llt.solve(grad);
        // Keep the correlations and scales from jumping to absurd values in one step.
        const double biggest = step.lpNorm<Eigen::Infinity>();
        if (biggest > 2.0) step *= 2.0 / biggest;

        double t = 1.0;
        bool improved = false;
        Eigen::VectorXd next_grad;
        for (int half = 0; half < 40 && !improved; ++half, t *= 0.5) {
            Eigen::VectorXd candidate = theta + t * step;
            const double cand_ll = loglik(candidate, &next_grad);
            if (std::isfinite(cand_ll) && cand_ll > ll) {
                improved = true;
                theta = candidate;
                ll = cand_ll;
                grad = next_grad;
            }
        }
        if (!improved) {
            // No representable ascent left; accept if the gradient is already negligible.
            converged = grad.lpNorm<Eigen::Infinity>() < std::sqrt(options.gradient_tolerance);
            break;
        }
    }
    fit.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    fit.iterations = iter;
    if (!converged) {
        throw ConvergenceError("normal selection likelihood did not converge (gradient max-norm " +
                                   std::to_string(fit.gradient_norm) + ")",
                               fit.gradient_norm);
    }

    fit.theta = theta;
    fit.log_likelihood = ll;
    Eigen::MatrixXd info = -hessian(theta);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    if (!lu.isInvertible()) throw NumericalError("normal selection information matrix is singular");
    fit.theta_covariance = lu.inverse();
    fit.theta_covariance = 0.5 * (fit.theta_covariance + fit.theta_covariance.transpose());

    fit.gamma = theta.segment(at.gamma(), at.kz);
    fit.beta1 = theta.segment(at.beta1(), at.kx);
    fit.beta0 = theta.segment(at.beta0(), at.kx);
    fit.sigma1 = std::exp(theta[at.log_sigma1()]);
    fit.sigma0 = std::exp(theta[at.log_sigma0()]);
    fit.rho1 = std::tanh(theta[at.eta1()]);
    fit.rho0 = std::tanh(theta[at.eta0()]);
    for (auto [rho, label] : {std::pair{fit.rho1, "rho1"}, std::pair{fit.rho0, "rho0"}})
        if (std::abs(rho) > options.boundary)
            fit.warnings.push_back(std::string(label) + " = " + std::to_string(rho) + " is at the boundary of (-1, 1)");
    return fit;
}

NormalSelectionFit fit_normal_selection(const Dataset &data, const NormalSelectionOptions &options) {
    data.require_arms(2);
    const auto &roles = data.roles();
    roles.require_instruments();
    return fit_normal_selection(data.vector(roles.outcome()), data.treatment(), data.matrix(roles.covariates()),
                                data.matrix(roles.instruments()), roles.covariates(), roles.instruments(), options);
}

Eigen::VectorXd NormalSelectionFit::gamma_se() const {
    return theta_covariance.diagonal().segment(0, gamma.size()).cwiseSqrt();
}

Eigen::VectorXd NormalSelectionFit::beta1_se() const {
    return theta_covariance.diagonal().segment(gamma.size(), beta1.size()).cwiseSqrt();
}

Eigen::VectorXd NormalSelectionFit::beta0_se() const {
    return theta_covariance.diagonal().segment(gamma.size() + beta1.size(), beta0.size()).cwiseSqrt();
}

double NormalSelectionFit::sigma1_se() const {
    return sigma1 * se_at(theta_covariance, gamma.size() + 2 * beta1.size());
}

double NormalSelectionFit::sigma0_se() const {
    return sigma0 * se_at(theta_covariance, gamma.size() + 2 * beta1.size() + 1);
}

double NormalSelectionFit::rho1_se() const {
    return (1.0 - rho1 * rho1) * se_at(theta_covariance, gamma.size() + 2 * beta1.size() + 2);
}

double NormalSelectionFit::rho0_se() const {
    return (1.0 - rho0 * rho0) * se_at(theta_covariance, gamma.size() + 2 * beta1.size() + 3);
}

double NormalSelectionFit::mte(const Eigen::VectorXd &x, double v) const {
    if (x.size() + 1 != beta1.size())
        throw InputError("evaluation point has " + std::to_string(x.size()) + " covariates, model has " +
                         std::to_string(beta1.size() - 1));
    const Eigen::VectorXd gap = beta1 - beta0;
    return gap[0] + x.dot(gap.tail(x.size())) + (rho1 * sigma1 - rho0 * sigma0) * normal_quantile(v);
}

std::vector<double> NormalSelectionFit::propensity(const Eigen::MatrixXd &z) const {
    if (z.cols() + 1 != gamma.size()) throw InputError("selection design does not match the fitted model");
    Eigen::VectorXd index = (z * gamma.tail(z.cols())).array() + gamma[0];
    std::vector<double> p(static_cast<std::size_t>(index.size()));
    for (Eigen::Index i = 0; i < index.size(); ++i)
        p[static_cast<std::size_t>(i)] = std::clamp(normal_cdf(index[i]), 1e-12, 1.0 - 1e-12);
    return p;
}

} // namespace mtekit
