#pragma once

#include "mtekit/inference.hpp"
#include "mtekit/mte.hpp"
#include "mtekit/normal_selection.hpp"
#include "mtekit/selection.hpp"
#include "mtekit/treatment_params.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mtekit {

/// Multiplies `column` by (1 - shift); a 15% cut of a distance instrument is shift 0.15.
struct PolicyShift {
    std::string column;
    double shift = 0.15;
};

Dataset apply_policy(const Dataset &data, const PolicyShift &policy);

struct MteOptions {
    std::vector<double> v_grid = default_v_grid();
    std::optional<double> bandwidth;
    double trim = 0.01;
    std::optional<PolicyShift> policy;
    unsigned threads = 0;
};

/// First-stage logit, support, partially linear fit, MTE curve and treatment parameters from one dataset.
struct SemiparametricResult {
    LogitFit logit;
    PropensityScores scores;
    std::optional<PropensityScores> policy_scores;
    Support support;
    PartiallyLinearFit fit;
    MteCurve curve;
    TreatmentEffects effects;
};

/// The logit uses covariates and instruments; `eval_point` defaults to the estimation-sample means.
SemiparametricResult estimate_semiparametric(const Dataset &data, const MteOptions &options,
                                             const std::optional<Eigen::VectorXd> &eval_point = std::nullopt);

/// Normal selection model with its own probit scores; its curve covers the whole grid.
struct NormalResult {
    NormalSelectionFit fit;
    std::vector<double> scores;
    std::optional<std::vector<double>> policy_scores;
    MteCurve curve;
    TreatmentEffects effects;
};

/// `eval_point` defaults to the full-sample covariate means.
NormalResult estimate_normal(const Dataset &data, const MteOptions &options,
                             const std::optional<Eigen::VectorXd> &eval_point = std::nullopt);

/// Treatment parameters followed by "mte@<v>" for every grid point.
Estimates flatten(const TreatmentEffects &effects, const MteCurve &curve);

/// Attaches HPD intervals from `draws` to the parameters and the curve (NaN where draws are too few).
void attach_intervals(TreatmentEffects &effects, MteCurve &curve, const BootstrapDraws &draws, double level = 0.95);

} // namespace mtekit
