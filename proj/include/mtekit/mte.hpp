#pragma once

#include "mtekit/dataset.hpp"
#include "mtekit/selection.hpp"

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtekit {

/// Closed interval of propensity scores where both treatment arms are observed.
struct Support {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
};

/// 0.01, 0.02, ..., 0.99.
std::vector<double> default_v_grid();
/// lo, lo + step, ... up to hi (inclusive within rounding); all points strictly inside (0, 1).
std::vector<double> make_v_grid(double lo, double hi, double step);

/// Linear-interpolation quantile (the usual "type 7" definition).
double quantile(std::vector<double> values, double prob);

/** Intersection of the two arms' score ranges after trimming `trim` mass from each tail of each arm.
 *
 * \throws NumericalError "no common support" when the trimmed ranges do not overlap
 */
Support common_support(std::span<const double> p_treated, std::span<const double> p_untreated, double trim);
Support common_support(const Dataset &data, const PropensityScores &scores, double trim);

struct PartiallyLinearOptions {
    /// Fixed bandwidth in propensity units; cross-validated when absent.
    std::optional<double> bandwidth;
    std::vector<double> v_grid = default_v_grid();
    std::size_t min_neighbors = 5;
    unsigned threads = 0;
};

/// How the bandwidth was chosen: candidates, their leave-one-out scores and standard errors.
struct BandwidthSelection {
    bool cross_validated = false;
    std::vector<double> candidates;
    std::vector<double> scores; ///< NaN where a candidate was infeasible
    std::vector<double> standard_errors;
};

/** Y = X b0 + (X P) b_gap + K(P) + e, with K left nonparametric.
 *
 * K absorbs the intercept and the P-linear term (alpha1 - alpha0) P, so only its derivative and
 * differences in its level are meaningful.
 */
struct PartiallyLinearFit {
    std::vector<std::string> covariates;
    Eigen::VectorXd beta0;
    Eigen::VectorXd beta_gap;
    Eigen::MatrixXd vcov; ///< HC1 covariance of [beta0; beta_gap]
    std::vector<double> v_grid;
    std::vector<double> k_hat; ///< NaN outside support
    std::vector<bool> in_support;
    double bandwidth = 0.0;
    BandwidthSelection selection;
    Support support;
    Eigen::VectorXd covariate_means; ///< over the estimation sample
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;
    unsigned threads = 0;

    /// Estimation sample kept for the derivative step: P and Y - X b0 - X P b_gap.
    std::vector<double> p_sample;
    std::vector<double> y_partial;

    Eigen::VectorXd beta_gap_se() const;
    Eigen::VectorXd beta0_se() const;
};

/** Double-residual (Robinson) fit of the partially linear model.
 *
 * Rows with P outside `support` are dropped. Y, each X and each X*P are smoothed on P by local
 * linear regression; the linear coefficients come from least squares on the residuals, and K is the
 * local linear fit of Y - X b0 - X P b_gap on P.
 *
 * Without a fixed bandwidth, a pilot fit (candidate 5 of 10) supplies the partial residuals whose
 * leave-one-out error scores every candidate; the largest candidate within half a standard error of the
 * best score wins.
 */
PartiallyLinearFit fit_partially_linear(const Eigen::VectorXd &y, const Eigen::MatrixXd &x, std::span<const double> p,
                                        const std::vector<std::string> &covariate_names, const Support &support,
                                        const PartiallyLinearOptions &options = {});
PartiallyLinearFit fit_partially_linear(const Dataset &data, const PropensityScores &scores, const Support &support,
                                        const PartiallyLinearOptions &options = {});

/// Slope of the local linear fit of the partial residuals at each grid point; NaN outside support.
std::vector<double> k_derivative(const PartiallyLinearFit &fit, std::span<const double> v_grid);

/// MTE(x, v) on a grid, with a support mask and optional pointwise intervals.
struct MteCurve {
    std::vector<double> v_grid;
    std::vector<double> values;
    std::vector<bool> in_support;
    Eigen::VectorXd eval_point;
    std::vector<double> ci_lo; ///< empty or NaN when no interval is available
    std::vector<double> ci_hi;

    std::size_t size() const { return v_grid.size(); }
};

/// x . b_gap + K'(v); `x` defaults to the covariate means of the estimation sample.
MteCurve mte_curve(const PartiallyLinearFit &fit, const std::optional<Eigen::VectorXd> &x,
                   std::span<const double> v_grid);

/// Columns v, mte, in_support, ci_lo, ci_hi.
void write_curve_csv(const MteCurve &curve, const std::string &path);
MteCurve read_curve_csv(const std::string &path);

} // namespace mtekit
