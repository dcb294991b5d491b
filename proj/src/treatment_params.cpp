#include "mtekit/treatment_params.hpp"
#include "mtekit/error.hpp"
#include "mtekit/local_linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtekit {

namespace {

std::vector<bool> support_mask(std::span<const double> v_grid, const Support &support) {
    std::vector<bool> mask(v_grid.size());
    for (std::size_t g = 0; g < v_grid.size(); ++g) mask[g] = support.contains(v_grid[g]);
    return mask;
}

void require_grid(std::span<const double> v_grid) {
    if (v_grid.size() < 2) throw InputError("v-grid needs at least two points");
    for (std::size_t g = 0; g < v_grid.size(); ++g) {
        if (!(v_grid[g] >= 0.0 && v_grid[g] <= 1.0)) throw InputError("v-grid points must lie in [0, 1]");
        if (g && !(v_grid[g] > v_grid[g - 1])) throw InputError("v-grid must be strictly ascending");
    }
}

/// Zeroes the density off support and rescales it to unit trapezoid mass on support.
WeightFunction normalize(WeightKind kind, std::span<const double> v_grid, std::vector<double> density,
                         const Support &support) {
    require_grid(v_grid);
    WeightFunction w;
    w.kind = kind;
    w.v_grid.assign(v_grid.begin(), v_grid.end());
    w.in_support = support_mask(v_grid, support);
    const std::vector<bool> everywhere(v_grid.size(), true);
    const double total = trapezoid(v_grid, density, everywhere);
    for (std::size_t g = 0; g < density.size(); ++g)
        if (!w.in_support[g]) density[g] = 0.0;
    const double inside = trapezoid(v_grid, density, w.in_support);
    if (!(inside > 0.0))
        throw NumericalError(std::string("empty support: ") + std::string(to_string(kind)) +
                             " weights carry no mass on the support grid");
    for (double &d : density) d /= inside;
    w.weights = std::move(density);
    w.truncated_mass = total > 0.0 ? std::max(0.0, 1.0 - inside / total) : 0.0;
    return w;
}

std::vector<double> sorted_copy(std::span<const double> scores) {
    std::vector<double> s(scores.begin(), scores.end());
    std::sort(s.begin(), s.end());
    return s;
}

double share_above(const std::vector<double> &sorted, double v) {
    auto it = std::upper_bound(sorted.begin(), sorted.end(), v);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

} // namespace

std::string_view to_string(WeightKind kind) {
    switch (kind) {
    case WeightKind::ate: return "ate";
    case WeightKind::att: return "att";
    case WeightKind::atu: return "atu";
    case WeightKind::prte: return "prte";
    case WeightKind::mprte: return "mprte";
    }
    return "unknown";
}

double trapezoid(std::span<const double> v_grid, std::span<const double> values, const std::vector<bool> &mask) {
    if (values.size() != v_grid.size() || mask.size() != v_grid.size())
        throw InputError("grid, values and mask lengths differ");
    double sum = 0.0;
    for (std::size_t g = 0; g + 1 < v_grid.size(); ++g)
        if (mask[g] && mask[g + 1]) sum += 0.5 * (v_grid[g + 1] - v_grid[g]) * (values[g] + values[g + 1]);
    return sum;
}

WeightFunction weights_ate(std::span<const double> v_grid, const Support &support) {
    return normalize(WeightKind::ate, v_grid, std::vector<double>(v_grid.size(), 1.0), support);
}

WeightFunction weights_att(std::span<const double> scores, std::span<const double> v_grid, const Support &support) {
    auto sorted = sorted_copy(scores);
    if (sorted.empty() || sorted.back() <= 0.0) throw InputError("ATT weights need treated observations (scores above 0)");
    std::vector<double> d(v_grid.size());
    for (std::size_t g = 0; g < v_grid.size(); ++g) d[g] = share_above(sorted, v_grid[g]);
    return normalize(WeightKind::att, v_grid, std::move(d), support);
}

WeightFunction weights_atu(std::span<const double> scores, std::span<const double> v_grid, const Support &support) {
    auto sorted = sorted_copy(scores);
    if (sorted.empty() || sorted.front() >= 1.0) throw InputError("ATU weights need untreated observations (scores below 1)");
    std::vector<double> d(v_grid.size());
    for (std::size_t g = 0; g < v_grid.size(); ++g) d[g] = 1.0 - share_above(sorted, v_grid[g]);
    return normalize(WeightKind::atu, v_grid, std::move(d), support);
}

WeightFunction weights_prte(std::span<const double> base_scores, std::span<const double> policy_scores,
                            std::span<const double> v_grid, const Support &support) {
    if (base_scores.empty() || base_scores.size() != policy_scores.size())
        throw InputError("base and policy scores must be non-empty and aligned");
    const double n = static_cast<double>(base_scores.size());
    const double shift = (std::accumulate(policy_scores.begin(), policy_scores.end(), 0.0) -
                          std::accumulate(base_scores.begin(), base_scores.end(), 0.0)) / n;
    if (std::abs(shift) < 1e-8) throw NumericalError("no one induced: the policy leaves mean propensity unchanged");
    auto base = sorted_copy(base_scores), policy = sorted_copy(policy_scores);
    std::vector<double> d(v_grid.size());
    for (std::size_t g = 0; g < v_grid.size(); ++g) {
        d[g] = share_above(policy, v_grid[g]) - share_above(base, v_grid[g]);
        if (d[g] < -1e-8)
            throw NumericalError("policy is not monotone: it moves people out of treatment at v = " +
                                 std::to_string(v_grid[g]));
        d[g] = std::max(d[g], 0.0);
    }
    try {
        return normalize(WeightKind::prte, v_grid, std::move(d), support);
    } catch (const NumericalError &) {
        throw NumericalError("no one induced: the policy moves no propensity mass across the support grid");
    }
}

WeightFunction weights_mprte(std::span<const double> scores, std::span<const double> v_grid, const Support &support) {
    if (scores.size() < 2) throw NumericalError("degenerate score distribution: fewer than two scores");
    std::vector<double> s(scores.begin(), scores.end());
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double iqr = (quantile(s, 0.75) - quantile(s, 0.25)) / 1.349;
    const double spread = iqr > 0.0 ? std::min(sd, iqr) : sd;
    if (!(spread > 1e-12)) throw NumericalError("degenerate score distribution: propensity scores do not vary");
    const double h = 2.34 * spread * std::pow(n, -0.2);

    std::sort(s.begin(), s.end());
    std::vector<double> d(v_grid.size(), 0.0);
    for (std::size_t g = 0; g < v_grid.size(); ++g) {
        auto lo = std::upper_bound(s.begin(), s.end(), v_grid[g] - h);
        auto hi = std::lower_bound(s.begin(), s.end(), v_grid[g] + h);
        double sum = 0.0;
        for (auto it = lo; it != hi; ++it) sum += epanechnikov((v_grid[g] - *it) / h);
        d[g] = sum / (n * h);
    }
    return normalize(WeightKind::mprte, v_grid, std::move(d), support);
}

double integrate(const MteCurve &curve, const WeightFunction &w) {
    if (curve.size() != w.v_grid.size()) throw InputError("curve and weights live on different grids");
    for (std::size_t g = 0; g < curve.size(); ++g) {
        if (std::abs(curve.v_grid[g] - w.v_grid[g]) > 1e-12) throw InputError("curve and weights live on different grids");
        if (w.in_support[g] && !std::isfinite(curve.values[g]))
            throw NumericalError("curve has no value at v = " + std::to_string(curve.v_grid[g]) + " inside the support");
    }
    std::vector<double> product(curve.size(), 0.0);
    for (std::size_t g = 0; g < curve.size(); ++g)
        if (w.in_support[g]) product[g] = curve.values[g] * w.weights[g];
    return trapezoid(curve.v_grid, product, w.in_support);
}

double prte(const MteCurve &curve, std::span<const double> base_scores, std::span<const double> policy_scores,
            const Support &support) {
    return integrate(curve, weights_prte(base_scores, policy_scores, curve.v_grid, support));
}

double mprte(const MteCurve &curve, std::span<const double> base_scores, const Support &support) {
    return integrate(curve, weights_mprte(base_scores, curve.v_grid, support));
}

const ParameterEstimate *TreatmentEffects::find(std::string_view name) const {
    for (const auto &p : parameters)
        if (p.name == name) return &p;
    return nullptr;
}

double TreatmentEffects::value(std::string_view name) const {
    const auto *p = find(name);
    if (!p) throw InputError("no treatment parameter named '" + std::string(name) + "'");
    return p->value;
}

TreatmentEffects treatment_effects(const MteCurve &curve, const Support &support, std::span<const double> base_scores,
                                   std::optional<std::span<const double>> policy_scores) {
    TreatmentEffects out;
    out.support = support;
    auto add = [&](const WeightFunction &w) {
        out.parameters.push_back({std::string(to_string(w.kind)), integrate(curve, w), std::nullopt, std::nullopt,
                                  w.truncated_mass});
    };
    add(weights_ate(curve.v_grid, support));
    auto att = weights_att(base_scores, curve.v_grid, support);
    add(att);
    add(weights_atu(base_scores, curve.v_grid, support));
    if (policy_scores) add(weights_prte(base_scores, *policy_scores, curve.v_grid, support));
    add(weights_mprte(base_scores, curve.v_grid, support));

    auto sorted = sorted_copy(base_scores);
    std::vector<double> above(curve.size()), below(curve.size());
    for (std::size_t g = 0; g < curve.size(); ++g) {
        above[g] = share_above(sorted, curve.v_grid[g]);
        below[g] = 1.0 - above[g];
    }
    const double a = trapezoid(curve.v_grid, above, att.in_support);
    const double b = trapezoid(curve.v_grid, below, att.in_support);
    out.treated_share = a / (a + b);
    return out;
}

} // namespace mtekit
