#pragma once

#include "mtekit/dataset.hpp"
#include "mtekit/selection.hpp"

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace mtekit {

enum class SeType { classical, robust_hc1, cluster };

std::string_view to_string(SeType se);
SeType se_type_from_string(std::string_view name);

/// Least-squares (OLS or 2SLS) estimates with their covariance.
struct LinearFit {
    std::vector<std::string> names; ///< aligned with coefficients; intercept first when present
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd vcov;
    SeType se_type = SeType::classical;
    std::size_t n = 0;
    std::size_t n_clusters = 0;
    double r_squared = 0.0;
    std::optional<double> first_stage_F;
    Eigen::VectorXd residuals;
    std::vector<std::string> warnings;

    Eigen::VectorXd standard_errors() const { return vcov.diagonal().cwiseSqrt(); }
    double coefficient(const std::string &name) const;
    double standard_error(const std::string &name) const;
};

struct LinearOptions {
    SeType se = SeType::robust_hc1;
    std::optional<std::string> cluster;
    bool intercept = true;
    double weak_instrument_threshold = 10.0;
};

LinearFit fit_ols(const Dataset &data, const std::string &outcome, const std::vector<std::string> &regressors,
                  const LinearOptions &options = {});

/// OLS on raw arrays; `clusters` is required when `se == cluster`.
LinearFit fit_ols(const Eigen::VectorXd &y, const Eigen::MatrixXd &x, const std::vector<std::string> &names,
                  const LinearOptions &options, std::span<const double> clusters = {});

enum class InstrumentMode { distance, z_by_x_interactions, propensity_score };

std::string_view to_string(InstrumentMode mode);
InstrumentMode instrument_mode_from_string(std::string_view name);

/// Excluded instruments generated for one dataset; rows align with that dataset.
struct InstrumentSet {
    InstrumentMode mode = InstrumentMode::distance;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;
};

/** Builds the excluded instruments.
 *
 * distance: the base column alone. z_by_x_interactions: the base column plus its product with each
 * `interact_with` column. propensity_score: fitted probabilities from `logit`.
 */
InstrumentSet build_instrument_set(const Dataset &data, InstrumentMode mode, const std::string &base_instrument,
                                   const std::vector<std::string> &interact_with = {},
                                   const LogitFit *logit = nullptr);

/** Two-stage least squares with one endogenous regressor.
 *
 * Second-stage residuals use the observed endogenous regressor. The first-stage F tests the excluded
 * instruments with the same covariance type as the second stage; an F below the threshold adds a
 * warning to the fit.
 */
LinearFit fit_2sls(const Dataset &data, const std::string &outcome, const std::string &endogenous,
                   const InstrumentSet &instruments, const std::vector<std::string> &exogenous,
                   const LinearOptions &options = {});

} // namespace mtekit
