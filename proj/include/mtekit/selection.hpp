#pragma once

#include "mtekit/dataset.hpp"

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

namespace mtekit {

inline constexpr const char *kIntercept = "(intercept)";

struct LogitOptions {
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;
    /// Any |coefficient| beyond this while the likelihood still rises is read as separation.
    double separation_bound = 30.0;
};

/// First-stage logit of treatment on an intercept plus the named regressors.
struct LogitFit {
    std::vector<std::string> regressors; ///< excludes the intercept
    Eigen::VectorXd coefficients;        ///< intercept first
    Eigen::MatrixXd covariance;          ///< inverse observed information
    double log_likelihood = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::size_t n_obs = 0;
    double n_treated = 0.0;

    /// Names aligned with `coefficients`.
    std::vector<std::string> names() const;
    Eigen::VectorXd standard_errors() const;
    double coefficient(const std::string &regressor) const;
};

/// Treatment probabilities, one per dataset row, each strictly inside (0, 1).
struct PropensityScores {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double mean() const;
};

double logistic(double index);

/** Maximum-likelihood logit by Newton-Raphson with step halving.
 *
 * \throws RankError listing collinear regressors
 * \throws SeparationError naming the regressor whose coefficient runs away
 * \throws ConvergenceError with the final gradient max-norm
 */
LogitFit fit_logit(const Dataset &data, const std::vector<std::string> &regressors, const LogitOptions &options = {});

/// Same, on a prepared design (without intercept column) and 0/1 response.
LogitFit fit_logit(const Eigen::MatrixXd &regressors, const Eigen::VectorXd &treatment,
                   const std::vector<std::string> &names, const LogitOptions &options = {});

/// Linear index (intercept + regressors) for every row of `data`.
Eigen::VectorXd logit_index(const LogitFit &fit, const Dataset &data);

PropensityScores propensity(const LogitFit &fit, const Dataset &data);

/** Average marginal effect of each regressor on the treatment probability.
 *
 * Continuous regressors use the mean derivative; 0/1 regressors use the mean discrete change
 * from switching the indicator off to on with everything else held at observed values.
 */
std::map<std::string, double> average_marginal_derivative(const LogitFit &fit, const Dataset &data);
double average_marginal_derivative(const LogitFit &fit, const Dataset &data, const std::string &regressor);

struct LikelihoodRatioTest {
    double chi_square = 0.0;
    int df = 0;
    double p_value = 1.0;
};

/// Likelihood-ratio test of the regressors dropped from `full` to obtain `restricted`.
LikelihoodRatioTest instrument_joint_test(const LogitFit &full, const LogitFit &restricted);

} // namespace mtekit
