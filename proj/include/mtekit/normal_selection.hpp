#pragma once

#include "mtekit/dataset.hpp"
#include "mtekit/selection.hpp"

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

namespace mtekit {

struct NormalSelectionOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    /// Correlations whose magnitude exceeds this trigger a boundary warning.
    double boundary = 0.99;
};

/** Switching regression with jointly normal (U1, U0, Us), fit by full-information maximum likelihood.
 *
 * Selection: S = 1 iff z.gamma - u > 0 with u standard normal. Outcomes: Y1 = x.beta1 + U1 and
 * Y0 = x.beta0 + U0, where U_j = sigma_j e_j and corr(e_j, u) = rho_j. Intercepts lead gamma, beta1
 * and beta0.
 */
struct NormalSelectionFit {
    std::vector<std::string> selection_names; ///< intercept, covariates, instruments
    std::vector<std::string> outcome_names;   ///< intercept, covariates
    Eigen::VectorXd gamma, beta1, beta0;
    double sigma1 = 1.0, sigma0 = 1.0, rho1 = 0.0, rho0 = 0.0;

    /// Optimizer parameters [gamma, beta1, beta0, log sigma1, log sigma0, atanh rho1, atanh rho0].
    Eigen::VectorXd theta;
    Eigen::MatrixXd theta_covariance;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    std::size_t n_obs = 0;
    std::vector<std::string> warnings;

    Eigen::VectorXd gamma_se() const;
    Eigen::VectorXd beta1_se() const;
    Eigen::VectorXd beta0_se() const;
    double sigma1_se() const;
    double sigma0_se() const;
    double rho1_se() const;
    double rho0_se() const;

    /// x.(beta1 - beta0) over the slope part plus the intercept gap, plus (rho1 sigma1 - rho0 sigma0) Phi^-1(v).
    /// `x` excludes the intercept.
    double mte(const Eigen::VectorXd &x, double v) const;
    /// Probit treatment probabilities for the rows of `z` (without the intercept column).
    std::vector<double> propensity(const Eigen::MatrixXd &z) const;
};

/** \throws ConvergenceError carrying the final gradient max-norm
 *  \throws RankError when the selection or outcome design is collinear
 */
NormalSelectionFit fit_normal_selection(const Eigen::VectorXd &y, std::span<const double> treatment,
                                        const Eigen::MatrixXd &covariates, const Eigen::MatrixXd &instruments,
                                        const std::vector<std::string> &covariate_names,
                                        const std::vector<std::string> &instrument_names,
                                        const NormalSelectionOptions &options = {});
NormalSelectionFit fit_normal_selection(const Dataset &data, const NormalSelectionOptions &options = {});

/// Log-likelihood and its gradient at `theta`, exposed for derivative checks.
double normal_selection_loglik(const Eigen::VectorXd &theta, const Eigen::VectorXd &y, std::span<const double> treatment,
                               const Eigen::MatrixXd &x, const Eigen::MatrixXd &z, Eigen::VectorXd *gradient);

double normal_quantile(double p);
double normal_cdf(double x);

} // namespace mtekit
