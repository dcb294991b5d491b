#pragma once

#include "mtekit/dataset.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace mtekit {

enum class Distribution { normal, uniform, bernoulli };

/// An exogenous regressor drawn independently: normal(a = mean, b = sd), uniform(a = low, b = high) or bernoulli(a = p).
struct VariableSpec {
    std::string name;
    Distribution distribution = Distribution::normal;
    double a = 0.0;
    double b = 1.0;
};

/** Generalized Roy model with jointly normal errors.
 *
 *   Y1 = alpha1 + X beta1 + U1,  Y0 = alpha0 + X beta0 + U0,
 *   S = 1 iff Z lambda - Us > 0 with Z = (1, X, instruments),
 *   Y = S Y1 + (1 - S) Y0.
 *
 * `sigma` is the covariance of (U1, U0, Us) in that order.
 */
struct RoyModelSpec {
    std::string name;
    std::vector<VariableSpec> covariates;
    std::vector<VariableSpec> instruments;
    double alpha0 = 0.0, alpha1 = 0.0;
    Eigen::VectorXd beta0, beta1;
    Eigen::VectorXd lambda; ///< intercept, covariates, instruments
    Eigen::Matrix3d sigma = Eigen::Matrix3d::Identity();
    /// Rows are split into this many equal contiguous clusters (0 = no cluster column).
    std::size_t clusters = 0;
    std::string outcome = "y";
    std::string treatment = "s";
    std::string cluster_column = "community";

    /// Throws InputError on dimension mismatches, an indefinite sigma or Var(Us) <= 0.
    void validate() const;
    RoleMap roles() const;
};

/// Per-row ground truth, kept apart from the estimation data.
struct Truth {
    std::vector<double> p;    ///< Pr(S = 1 | Z)
    std::vector<double> v;    ///< F(Us), uniform on (0, 1)
    std::vector<double> gain; ///< Y1 - Y0
    std::vector<double> ate_x; ///< alpha1 - alpha0 + X (beta1 - beta0)
};

struct Simulated {
    Dataset data;
    Truth truth;
};

/// Deterministic for a given (spec, n, seed). \throws InputError when n < 1 or the spec is invalid
Simulated generate(const RoyModelSpec &spec, std::size_t n, std::uint64_t seed);

/// (alpha1 - alpha0) + x (beta1 - beta0) + [(Cov(U1, Us) - Cov(U0, Us)) / SD(Us)] Phi^-1(v).
double true_mte(const RoyModelSpec &spec, const Eigen::VectorXd &x, double v);
/// Pr(S = 1) for one row's covariates and instruments.
double true_propensity(const RoyModelSpec &spec, const Eigen::VectorXd &x, const Eigen::VectorXd &z);
/// Population means of the covariates.
Eigen::VectorXd covariate_means(const RoyModelSpec &spec);

/// "homogeneous", "selection-on-gains" and "paper-like".
std::vector<RoyModelSpec> presets();
RoyModelSpec preset(const std::string &name);

RoyModelSpec spec_from_json(const std::string &text);
std::string spec_to_json(const RoyModelSpec &spec);
/// A preset name or a path to a JSON spec file.
RoyModelSpec load_spec(const std::string &name_or_path);

/// Columns row, true_p, true_v, gain, ate_x.
void write_truth_csv(const Truth &truth, const std::string &path);

/// Kolmogorov-Smirnov distance between the sample and Uniform(0, 1).
double ks_uniform(std::vector<double> values);

} // namespace mtekit
