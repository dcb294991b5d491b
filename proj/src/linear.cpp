#include "mtekit/linear.hpp"
#include "mtekit/error.hpp"
#include "linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <map>

namespace mtekit {

std::string_view to_string(SeType se) {
    switch (se) {
    case SeType::classical: return "classical";
    case SeType::robust_hc1: return "robust_hc1";
    case SeType::cluster: return "cluster";
    }
    return "unknown";
}

SeType se_type_from_string(std::string_view name) {
    if (name == "classical") return SeType::classical;
    if (name == "robust_hc1" || name == "robust") return SeType::robust_hc1;
    if (name == "cluster") return SeType::cluster;
    throw InputError("unknown standard-error type '" + std::string(name) + "'");
}

std::string_view to_string(InstrumentMode mode) {
    switch (mode) {
    case InstrumentMode::distance: return "distance";
    case InstrumentMode::z_by_x_interactions: return "z_by_x_interactions";
    case InstrumentMode::propensity_score: return "propensity_score";
    }
    return "unknown";
}

InstrumentMode instrument_mode_from_string(std::string_view name) {
    if (name == "distance") return InstrumentMode::distance;
    if (name == "z_by_x_interactions") return InstrumentMode::z_by_x_interactions;
    if (name == "propensity_score") return InstrumentMode::propensity_score;
    throw InputError("unknown instrument mode '" + std::string(name) + "'");
}

double LinearFit::coefficient(const std::string &name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InputError("fit has no coefficient '" + name + "'");
    return coefficients[it - names.begin()];
}

double LinearFit::standard_error(const std::string &name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InputError("fit has no coefficient '" + name + "'");
    auto j = it - names.begin();
    return std::sqrt(vcov(j, j));
}

namespace {

struct Covariance {
    Eigen::MatrixXd vcov;
    std::size_t n_clusters = 0;
};

/// Covariance of least-squares coefficients with score design `x` and residuals `e`.
Covariance sandwich(const Eigen::MatrixXd &x, const Eigen::VectorXd &e, SeType se, std::span<const double> clusters) {
    const double n = static_cast<double>(x.rows());
    const double k = static_cast<double>(x.cols());
    Eigen::MatrixXd bread = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
    Covariance out;
    switch (se) {
    case SeType::classical: {
        double s2 = e.squaredNorm() / (n - k);
        out.vcov = s2 * bread;
        break;
    }
    case SeType::robust_hc1: {
        Eigen::MatrixXd u = x.array().colwise() * e.array();
        out.vcov = (n / (n - k)) * bread * (u.transpose() * u) * bread;
        break;
    }
    case SeType::cluster: {
        if (clusters.size() != static_cast<std::size_t>(x.rows()))
            throw InputError("cluster-robust covariance needs a cluster id for every row");
        std::map<double, Eigen::VectorXd> score;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            auto [it, inserted] = score.try_emplace(clusters[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(x.cols()));
            it->second += x.row(i).transpose() * e[i];
        }
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
        for (const auto &[id, s] : score) meat += s * s.transpose();
        const double g = static_cast<double>(score.size());
        if (g < 2) throw InputError("cluster-robust covariance needs at least two clusters");
        out.vcov = (g / (g - 1.0)) * ((n - 1.0) / (n - k)) * bread * meat * bread;
        out.n_clusters = score.size();
        break;
    }
    }
    out.vcov = 0.5 * (out.vcov + out.vcov.transpose());
    return out;
}

std::vector<double> cluster_ids(const Dataset &data, const LinearOptions &options) {
    if (options.se != SeType::cluster) return {};
    std::string name = options.cluster ? *options.cluster : data.roles().cluster().value_or("");
    if (name.empty()) throw InputError("cluster standard errors requested but no cluster column given");
    if (!data.has_column(name)) throw InputError("cluster column '" + name + "' is absent");
    auto c = data.column(name);
    return {c.begin(), c.end()};
}

double r_squared(const Eigen::VectorXd &y, const Eigen::VectorXd &e, bool intercept) {
    double tss = intercept ? (y.array() - y.mean()).square().sum() : y.squaredNorm();
    return tss > 0 ? 1.0 - e.squaredNorm() / tss : 1.0;
}

Eigen::VectorXd solve_ls(const Eigen::MatrixXd &x, const Eigen::VectorXd &y) {
    return x.colPivHouseholderQr().solve(y);
}

} // namespace

LinearFit fit_ols(const Eigen::VectorXd &y, const Eigen::MatrixXd &x, const std::vector<std::string> &names,
                  const LinearOptions &options, std::span<const double> clusters) {
    LinearFit fit;
    Eigen::MatrixXd design = options.intercept ? detail::with_intercept(x) : x;
    fit.names = names;
    if (options.intercept) fit.names.insert(fit.names.begin(), kIntercept);
    detail::require_full_rank(design, fit.names, "OLS");
    if (design.rows() <= design.cols()) throw RankError("OLS needs more rows than coefficients");

    fit.coefficients = solve_ls(design, y);
    fit.residuals = y - design * fit.coefficients;
    auto cov = sandwich(design, fit.residuals, options.se, clusters);
    fit.vcov = cov.vcov;
    fit.n_clusters = cov.n_clusters;
    fit.se_type = options.se;
    fit.n = static_cast<std::size_t>(y.size());
    fit.r_squared = r_squared(y, fit.residuals, options.intercept);
    return fit;
}

LinearFit fit_ols(const Dataset &data, const std::string &outcome, const std::vector<std::string> &regressors,
                  const LinearOptions &options) {
    auto clusters = cluster_ids(data, options);
    return fit_ols(data.vector(outcome), data.matrix(regressors), regressors, options, clusters);
}

InstrumentSet build_instrument_set(const Dataset &data, InstrumentMode mode, const std::string &base_instrument,
                                   const std::vector<std::string> &interact_with, const LogitFit *logit) {
    InstrumentSet set;
    set.mode = mode;
    const auto n = static_cast<Eigen::Index>(data.n_rows());
    switch (mode) {
    case InstrumentMode::distance:
        set.columns = {base_instrument};
        set.values = data.matrix(set.columns);
        break;
    case InstrumentMode::z_by_x_interactions: {
        if (interact_with.empty()) throw InputError("z_by_x_interactions needs at least one interaction column");
        Eigen::VectorXd z = data.vector(base_instrument);
        set.columns = {base_instrument};
        set.values.resize(n, static_cast<Eigen::Index>(interact_with.size() + 1));
        set.values.col(0) = z;
        for (std::size_t j = 0; j < interact_with.size(); ++j) {
            set.columns.push_back(base_instrument + "*" + interact_with[j]);
            set.values.col(static_cast<Eigen::Index>(j + 1)) = z.cwiseProduct(data.vector(interact_with[j]));
        }
        break;
    }
    case InstrumentMode::propensity_score: {
        if (!logit) throw InputError("propensity_score instruments need a fitted logit");
        auto p = propensity(*logit, data);
        set.columns = {"propensity_score"};
        set.values = Eigen::Map<const Eigen::VectorXd>(p.values.data(), n);
        break;
    }
    }
    return set;
}

LinearFit fit_2sls(const Dataset &data, const std::string &outcome, const std::string &endogenous,
                   const InstrumentSet &instruments, const std::vector<std::string> &exogenous,
                   const LinearOptions &options) {
    const Eigen::Index n = static_cast<Eigen::Index>(data.n_rows());
    const Eigen::Index q = instruments.values.cols();
    if (instruments.values.rows() != n) throw InputError("instrument rows do not match the dataset");
    if (q < 1) throw InputError("order condition fails: no excluded instruments for '" + endogenous + "'");

    auto clusters = cluster_ids(data, options);
    Eigen::VectorXd y = data.vector(outcome);
    Eigen::VectorXd s = data.vector(endogenous);
    Eigen::MatrixXd w = data.matrix(exogenous);

    // First stage: endogenous on intercept, exogenous, excluded instruments.
    const Eigen::Index k_exog = w.cols() + (options.intercept ? 1 : 0);
    Eigen::MatrixXd first(n, k_exog + q);
    std::vector<std::string> first_names;
    if (options.intercept) {
        first.col(0).setOnes();
        first_names.push_back(kIntercept);
    }
    first.middleCols(options.intercept ? 1 : 0, w.cols()) = w;
    first.rightCols(q) = instruments.values;
    first_names.insert(first_names.end(), exogenous.begin(), exogenous.end());
    first_names.insert(first_names.end(), instruments.columns.begin(), instruments.columns.end());
    detail::require_full_rank(first, first_names, "2SLS first stage");

    Eigen::VectorXd pi = solve_ls(first, s);
    Eigen::VectorXd s_hat = first * pi;
    auto first_cov = sandwich(first, s - s_hat, options.se, clusters);
    Eigen::VectorXd pi_z = pi.tail(q);
    Eigen::MatrixXd v_zz = first_cov.vcov.bottomRightCorner(q, q);
    double f_stat = pi_z.dot(v_zz.ldlt().solve(pi_z)) / static_cast<double>(q);

    // Second stage on [intercept, endogenous, exogenous].
    LinearFit fit;
    Eigen::MatrixXd x(n, k_exog + 1), x_hat(n, k_exog + 1);
    Eigen::Index col = 0;
    if (options.intercept) {
        x.col(0).setOnes();
        fit.names.push_back(kIntercept);
        ++col;
    }
    x.col(col) = s;
    fit.names.push_back(endogenous);
    x.rightCols(w.cols()) = w;
    fit.names.insert(fit.names.end(), exogenous.begin(), exogenous.end());
    x_hat = x;
    x_hat.col(col) = s_hat;
    detail::require_full_rank(x_hat, fit.names, "2SLS second stage");

    fit.coefficients = solve_ls(x_hat, y);
    fit.residuals = y - x * fit.coefficients;
    auto cov = sandwich(x_hat, fit.residuals, options.se, clusters);
    fit.vcov = cov.vcov;
    fit.n_clusters = cov.n_clusters;
    fit.se_type = options.se;
    fit.n = static_cast<std::size_t>(n);
    fit.r_squared = r_squared(y, fit.residuals, options.intercept);
    fit.first_stage_F = f_stat;
    if (f_stat < options.weak_instrument_threshold)
        fit.warnings.push_back("weak instruments: first-stage F " + std::to_string(f_stat) + " below " +
                               std::to_string(options.weak_instrument_threshold));
    return fit;
}

} // namespace mtekit
