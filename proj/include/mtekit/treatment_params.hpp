#pragma once

#include "mtekit/mte.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtekit {

enum class WeightKind { ate, att, atu, prte, mprte };
std::string_view to_string(WeightKind kind);

/** Weights on a v-grid, zero off the support, normalized to trapezoid integral 1 over the support points.
 *
 * `truncated_mass` is the share of the unnormalized weight mass on the full grid that lies outside
 * the support.
 */
struct WeightFunction {
    WeightKind kind = WeightKind::ate;
    std::vector<double> v_grid;
    std::vector<double> weights;
    std::vector<bool> in_support;
    double truncated_mass = 0.0;
};

/// Trapezoid integral of `values` over consecutive grid points that are both inside the mask.
double trapezoid(std::span<const double> v_grid, std::span<const double> values, const std::vector<bool> &mask);

WeightFunction weights_ate(std::span<const double> v_grid, const Support &support = {});
/// Proportional to the share of scores above v.
WeightFunction weights_att(std::span<const double> scores, std::span<const double> v_grid, const Support &support = {});
/// Proportional to the share of scores at or below v.
WeightFunction weights_atu(std::span<const double> scores, std::span<const double> v_grid, const Support &support = {});
/** Proportional to Pr(policy P > v) - Pr(base P > v).
 *
 * \throws NumericalError "no one induced" when mean scores barely move, or when a weight falls
 *         below -1e-8 (the policy moves some people out of treatment)
 */
WeightFunction weights_prte(std::span<const double> base_scores, std::span<const double> policy_scores,
                            std::span<const double> v_grid, const Support &support = {});
/// Epanechnikov kernel density of the scores, bandwidth 2.34 min(sd, IQR/1.349) n^(-1/5).
WeightFunction weights_mprte(std::span<const double> scores, std::span<const double> v_grid, const Support &support = {});

/// Trapezoid integral of curve x weights over the weight function's support points.
double integrate(const MteCurve &curve, const WeightFunction &w);

double prte(const MteCurve &curve, std::span<const double> base_scores, std::span<const double> policy_scores,
            const Support &support = {});
double mprte(const MteCurve &curve, std::span<const double> base_scores, const Support &support = {});

struct ParameterEstimate {
    std::string name;
    double value = 0.0;
    std::optional<double> ci_lo, ci_hi;
    double truncated_mass = 0.0;
};

/// ATE, ATT, ATU, MPRTE and (with policy scores) PRTE from one curve over one support.
struct TreatmentEffects {
    std::vector<ParameterEstimate> parameters;
    Support support;
    /// Share of scores above v integrated over the support; equals mean P on full support.
    double treated_share = 0.0;

    const ParameterEstimate *find(std::string_view name) const;
    double value(std::string_view name) const;
};

TreatmentEffects treatment_effects(const MteCurve &curve, const Support &support, std::span<const double> base_scores,
                                   std::optional<std::span<const double>> policy_scores = std::nullopt);

} // namespace mtekit
