#include "mtekit/selection.hpp"
#include "mtekit/error.hpp"
#include "linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <set>

namespace mtekit {

namespace {

double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double log_likelihood(const Eigen::MatrixXd &x, const Eigen::VectorXd &s, const Eigen::VectorXd &beta) {
    Eigen::VectorXd t = x * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) ll += s[i] * t[i] - log1pexp(t[i]);
    return ll;
}

bool is_indicator(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

} // namespace

double logistic(double index) {
    double p = index >= 0 ? 1.0 / (1.0 + std::exp(-index)) : std::exp(index) / (1.0 + std::exp(index));
    constexpr double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    return std::clamp(p, lo, hi);
}

double PropensityScores::mean() const {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

std::vector<std::string> LogitFit::names() const {
    std::vector<std::string> out{kIntercept};
    out.insert(out.end(), regressors.begin(), regressors.end());
    return out;
}

Eigen::VectorXd LogitFit::standard_errors() const { return covariance.diagonal().cwiseSqrt(); }

double LogitFit::coefficient(const std::string &regressor) const {
    auto n = names();
    auto it = std::find(n.begin(), n.end(), regressor);
    if (it == n.end()) throw InputError("logit has no regressor '" + regressor + "'");
    return coefficients[it - n.begin()];
}

LogitFit fit_logit(const Eigen::MatrixXd &regressors, const Eigen::VectorXd &treatment,
                   const std::vector<std::string> &names, const LogitOptions &options) {
    const Eigen::MatrixXd x = detail::with_intercept(regressors);
    std::vector<std::string> all_names{kIntercept};
    all_names.insert(all_names.end(), names.begin(), names.end());
    detail::require_full_rank(x, all_names, "logit");

    const Eigen::Index k = x.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    double ll = log_likelihood(x, treatment, beta);

    LogitFit fit;
    fit.regressors = names;
    fit.n_obs = static_cast<std::size_t>(x.rows());
    fit.n_treated = treatment.sum();

    Eigen::VectorXd grad;
    Eigen::MatrixXd info;
    for (int iter = 0;; ++iter) {
        Eigen::VectorXd p = (x * beta).unaryExpr([](double t) { return logistic(t); });
        grad = x.transpose() * (treatment - p);
        Eigen::VectorXd w = p.array() * (1.0 - p.array());
        info = x.transpose() * w.asDiagonal() * x;
        fit.iterations = iter;
        fit.gradient_norm = grad.cwiseAbs().maxCoeff();
        if (fit.gradient_norm <= options.gradient_tolerance) {
            if ((treatment - p).cwiseAbs().maxCoeff() < 1e-6) {
                Eigen::Index worst = 0;
                double biggest = beta.cwiseAbs().maxCoeff(&worst);
                throw SeparationError("logit fits every observation perfectly (perfect separation) on '" +
                                      all_names[static_cast<std::size_t>(worst)] + "' (|coefficient| " +
                                      std::to_string(biggest) + ")");
            }
            fit.converged = true;
            break;
        }
        if (iter >= options.max_iterations)
            throw ConvergenceError("logit did not converge after " + std::to_string(options.max_iterations) +
                                       " iterations (gradient max-norm " + std::to_string(fit.gradient_norm) + ")",
                                   fit.gradient_norm);

        Eigen::VectorXd step = info.ldlt().solve(grad);
        double t = 1.0, ll_new = ll;
        Eigen::VectorXd candidate = beta;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            candidate = beta + t * step;
            ll_new = log_likelihood(x, treatment, candidate);
            if (ll_new >= ll - 1e-12 * std::max(1.0, std::abs(ll))) break;
        }
        Eigen::Index worst = 0;
        double biggest = candidate.cwiseAbs().maxCoeff(&worst);
        if (biggest > options.separation_bound && ll_new > ll)
            throw SeparationError("logit coefficients diverge (perfect separation) on '" +
                                  all_names[static_cast<std::size_t>(worst)] + "' (|coefficient| " +
                                  std::to_string(biggest) + ")");
        if ((candidate - beta).cwiseAbs().maxCoeff() == 0.0 && ll_new <= ll) {
            // No representable progress left; accept the current point if the gradient is tiny in relative terms.
            double scale = (x.cwiseAbs().transpose() * Eigen::VectorXd::Ones(x.rows())).maxCoeff();
            if (fit.gradient_norm <= 1e-12 * scale) {
                fit.converged = true;
                break;
            }
        }
        beta = candidate;
        ll = ll_new;
    }

    fit.coefficients = beta;
    fit.log_likelihood = log_likelihood(x, treatment, beta);
    Eigen::MatrixXd cov = info.inverse();
    fit.covariance = 0.5 * (cov + cov.transpose());
    return fit;
}

LogitFit fit_logit(const Dataset &data, const std::vector<std::string> &regressors, const LogitOptions &options) {
    std::set<std::string> unique(regressors.begin(), regressors.end());
    if (unique.size() != regressors.size()) throw InputError("logit regressors contain duplicates");
    data.require_arms(1);
    return fit_logit(data.matrix(regressors), data.vector(data.roles().treatment()), regressors, options);
}

Eigen::VectorXd logit_index(const LogitFit &fit, const Dataset &data) {
    for (const auto &r : fit.regressors)
        if (!data.has_column(r)) throw InputError("dataset lacks logit regressor '" + r + "'");
    Eigen::MatrixXd x = data.matrix(fit.regressors);
    return (x * fit.coefficients.tail(x.cols())).array() + fit.coefficients[0];
}

PropensityScores propensity(const LogitFit &fit, const Dataset &data) {
    Eigen::VectorXd t = logit_index(fit, data);
    PropensityScores out;
    out.values.resize(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) out.values[static_cast<std::size_t>(i)] = logistic(t[i]);
    return out;
}

double average_marginal_derivative(const LogitFit &fit, const Dataset &data, const std::string &regressor) {
    auto pos = std::find(fit.regressors.begin(), fit.regressors.end(), regressor);
    if (pos == fit.regressors.end()) throw InputError("unknown regressor '" + regressor + "'");
    const Eigen::Index j = 1 + (pos - fit.regressors.begin());
    const double lambda = fit.coefficients[j];
    Eigen::VectorXd t = logit_index(fit, data);
    auto col = data.column(regressor);
    const double n = static_cast<double>(t.size());
    double sum = 0.0;
    if (is_indicator(col)) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            double base = t[i] - lambda * col[static_cast<std::size_t>(i)];
            sum += logistic(base + lambda) - logistic(base);
        }
    } else {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            double p = logistic(t[i]);
            sum += lambda * p * (1.0 - p);
        }
    }
    return sum / n;
}

std::map<std::string, double> average_marginal_derivative(const LogitFit &fit, const Dataset &data) {
    std::map<std::string, double> out;
    for (const auto &r : fit.regressors) out[r] = average_marginal_derivative(fit, data, r);
    return out;
}

LikelihoodRatioTest instrument_joint_test(const LogitFit &full, const LogitFit &restricted) {
    std::set<std::string> f(full.regressors.begin(), full.regressors.end());
    for (const auto &r : restricted.regressors)
        if (!f.count(r)) throw InputError("models are not nested: '" + r + "' is only in the restricted model");
    if (full.n_obs != restricted.n_obs || full.n_treated != restricted.n_treated)
        throw InputError("likelihood-ratio test needs both models fit on identical rows");

    LikelihoodRatioTest test;
    test.df = static_cast<int>(full.regressors.size() - restricted.regressors.size());
    double diff = full.log_likelihood - restricted.log_likelihood;
    if (diff < -1e-8) throw NumericalError("restricted log-likelihood exceeds the full model's by " + std::to_string(-diff));
    test.chi_square = std::max(0.0, 2.0 * diff);
    if (test.df == 0) {
        test.p_value = 1.0;
    } else {
        boost::math::chi_squared dist(test.df);
        test.p_value = boost::math::cdf(boost::math::complement(dist, test.chi_square));
    }
    return test;
}

} // namespace mtekit
