#include "mtekit/pipeline.hpp"
#include "mtekit/error.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace mtekit {

namespace {

std::vector<std::string> first_stage_regressors(const Dataset &data) {
    data.roles().require_instruments();
    auto names = data.roles().covariates();
    const auto &z = data.roles().instruments();
    names.insert(names.end(), z.begin(), z.end());
    return names;
}

std::string grid_label(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return "mte@" + std::string(buf, ptr);
}

} // namespace

Dataset apply_policy(const Dataset &data, const PolicyShift &policy) {
    if (!(policy.shift > 0.0 && policy.shift < 1.0)) throw InputError("policy shift must lie in (0, 1)");
    auto col = data.column(policy.column);
    std::vector<double> shifted(col.begin(), col.end());
    for (double &v : shifted) v *= 1.0 - policy.shift;
    return data.with_column(policy.column, std::move(shifted));
}

SemiparametricResult estimate_semiparametric(const Dataset &data, const MteOptions &options,
                                             const std::optional<Eigen::VectorXd> &eval_point) {
    data.require_arms(2);
    SemiparametricResult r;
    r.logit = fit_logit(data, first_stage_regressors(data));
    r.scores = propensity(r.logit, data);
    if (options.policy) r.policy_scores = propensity(r.logit, apply_policy(data, *options.policy));
    r.support = common_support(data, r.scores, options.trim);

    PartiallyLinearOptions pl;
    pl.bandwidth = options.bandwidth;
    pl.v_grid = options.v_grid;
    pl.threads = options.threads;
    r.fit = fit_partially_linear(data, r.scores, r.support, pl);
    r.curve = mte_curve(r.fit, eval_point, options.v_grid);
    std::optional<std::span<const double>> policy;
    if (r.policy_scores) policy = std::span<const double>(r.policy_scores->values);
    r.effects = treatment_effects(r.curve, r.support, r.scores.values, policy);
    return r;
}

NormalResult estimate_normal(const Dataset &data, const MteOptions &options,
                             const std::optional<Eigen::VectorXd> &eval_point) {
    data.require_arms(2);
    NormalResult r;
    r.fit = fit_normal_selection(data);
    const auto &roles = data.roles();
    auto design = [&](const Dataset &d) {
        auto names = roles.covariates();
        names.insert(names.end(), roles.instruments().begin(), roles.instruments().end());
        return d.matrix(names);
    };
    r.scores = r.fit.propensity(design(data));
    if (options.policy) r.policy_scores = r.fit.propensity(design(apply_policy(data, *options.policy)));

    Eigen::VectorXd x = eval_point ? *eval_point : Eigen::VectorXd(data.matrix(roles.covariates()).colwise().mean().transpose());
    r.curve.v_grid = options.v_grid;
    r.curve.eval_point = x;
    r.curve.in_support.assign(options.v_grid.size(), true);
    for (double v : options.v_grid) r.curve.values.push_back(r.fit.mte(x, v));

    std::optional<std::span<const double>> policy;
    if (r.policy_scores) policy = std::span<const double>(*r.policy_scores);
    r.effects = treatment_effects(r.curve, Support{0.0, 1.0}, r.scores, policy);
    return r;
}

Estimates flatten(const TreatmentEffects &effects, const MteCurve &curve) {
    Estimates out;
    for (const auto &p : effects.parameters) out.emplace_back(p.name, p.value);
    for (std::size_t g = 0; g < curve.size(); ++g) out.emplace_back(grid_label(curve.v_grid[g]), curve.values[g]);
    return out;
}

void attach_intervals(TreatmentEffects &effects, MteCurve &curve, const BootstrapDraws &draws, double level) {
    auto interval = [&](const std::string &name) -> std::optional<std::pair<double, double>> {
        auto it = draws.draws.find(name);
        if (it == draws.draws.end()) return std::nullopt;
        try {
            return hpd_interval(it->second, level);
        } catch (const InputError &) {
            return std::nullopt;
        }
    };
    for (auto &p : effects.parameters) {
        if (auto ci = interval(p.name)) {
            p.ci_lo = ci->first;
            p.ci_hi = ci->second;
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    curve.ci_lo.assign(curve.size(), nan);
    curve.ci_hi.assign(curve.size(), nan);
    for (std::size_t g = 0; g < curve.size(); ++g) {
        if (!curve.in_support[g]) continue;
        if (auto ci = interval(grid_label(curve.v_grid[g]))) {
            curve.ci_lo[g] = ci->first;
            curve.ci_hi[g] = ci->second;
        }
    }
}

} // namespace mtekit
