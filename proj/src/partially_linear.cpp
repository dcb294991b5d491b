#include "mtekit/error.hpp"
#include "mtekit/linear.hpp"
#include "mtekit/local_linear.hpp"
#include "mtekit/mte.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mtekit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kCandidates = 10;
constexpr double kSmallestFraction = 0.05;
constexpr double kLargestFraction = 0.5;
constexpr int kPilotCandidate = 4;

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace

std::vector<double> default_v_grid() { return make_v_grid(0.01, 0.99, 0.01); }

std::vector<double> make_v_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(lo > 0.0) || !(hi < 1.0) || !(lo <= hi))
        throw InputError("v-grid needs 0 < lo <= hi < 1 and a positive step");
    std::vector<double> grid;
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long k = 0; k <= count; ++k) grid.push_back(lo + static_cast<double>(k) * step);
    return grid;
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw InputError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = prob * static_cast<double>(values.size() - 1);
    const auto below = static_cast<std::size_t>(std::floor(pos));
    const std::size_t above = std::min(below + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(below);
    return values[below] + frac * (values[above] - values[below]);
}

Support common_support(std::span<const double> p_treated, std::span<const double> p_untreated, double trim) {
    if (!(trim >= 0.0 && trim < 0.5)) throw InputError("trim fraction must lie in [0, 0.5)");
    if (p_treated.empty() || p_untreated.empty()) throw NumericalError("no common support: a treatment arm is empty");
    std::vector<double> t(p_treated.begin(), p_treated.end()), u(p_untreated.begin(), p_untreated.end());
    Support s;
    s.lo = std::max(quantile(t, trim), quantile(u, trim));
    s.hi = std::min(quantile(t, 1.0 - trim), quantile(u, 1.0 - trim));
    if (!(s.lo < s.hi)) {
        std::ostringstream msg;
        msg << "no common support (trimmed overlap [" << s.lo << ", " << s.hi << "] is empty)";
        throw NumericalError(msg.str());
    }
    return s;
}

Support common_support(const Dataset &data, const PropensityScores &scores, double trim) {
    if (scores.size() != data.n_rows()) throw InputError("propensity scores do not align with the dataset");
    auto s = data.treatment();
    std::vector<double> t, u;
    for (std::size_t i = 0; i < s.size(); ++i) (s[i] == 1.0 ? t : u).push_back(scores.values[i]);
    return common_support(t, u, trim);
}

Eigen::VectorXd PartiallyLinearFit::beta_gap_se() const {
    const auto k = beta0.size();
    return vcov.diagonal().tail(k).cwiseSqrt();
}

Eigen::VectorXd PartiallyLinearFit::beta0_se() const {
    const auto k = beta0.size();
    return vcov.diagonal().head(k).cwiseSqrt();
}

PartiallyLinearFit fit_partially_linear(const Eigen::VectorXd &y, const Eigen::MatrixXd &x, std::span<const double> p,
                                        const std::vector<std::string> &covariate_names, const Support &support,
                                        const PartiallyLinearOptions &options) {
    if (static_cast<std::size_t>(y.size()) != p.size() || x.rows() != y.size())
        throw InputError("outcome, covariates and propensity scores must have the same rows");
    if (static_cast<std::size_t>(x.cols()) != covariate_names.size())
        throw InputError("covariate names do not match the covariate matrix");
    if (!(support.lo > 0.0 && support.hi < 1.0 && support.lo < support.hi))
        throw InputError("support must satisfy 0 < lo < hi < 1");

    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (support.contains(p[i])) rows.push_back(static_cast<Eigen::Index>(i));
    const auto n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index k = x.cols();

    PartiallyLinearFit fit;
    fit.covariates = covariate_names;
    fit.support = support;
    fit.n_used = rows.size();
    fit.n_excluded = p.size() - rows.size();
    fit.threads = options.threads;
    if (n < 10) throw NumericalError("too few observations inside the common support");

    std::vector<double> ps(rows.size());
    Eigen::MatrixXd v(n, 1 + 2 * k); // [Y, X, X*P]
    for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        const double pi = p[static_cast<std::size_t>(i)];
        ps[static_cast<std::size_t>(r)] = pi;
        v(r, 0) = y[i];
        for (Eigen::Index j = 0; j < k; ++j) {
            v(r, 1 + j) = x(i, j);
            v(r, 1 + k + j) = x(i, j) * pi;
        }
    }
    const auto [pmin, pmax] = std::minmax_element(ps.begin(), ps.end());
    const double range = *pmax - *pmin;
    if (range < 1e-6) throw NumericalError("propensity scores show no variation inside the support");
    fit.covariate_means = v.middleCols(1, k).colwise().mean().transpose();

    LocalLinearSmoother smoother(ps, options.threads);

    // Linear coefficients from least squares on the double residuals.
    auto linear_part = [&](double h, Eigen::VectorXd &b0, Eigen::VectorXd &gap, Eigen::MatrixXd *cov) {
        if (k == 0) {
            b0.resize(0);
            gap.resize(0);
            if (cov) cov->resize(0, 0);
            return;
        }
        auto smooth = smoother.fit_in_sample(v, h, options.min_neighbors);
        Eigen::MatrixXd resid = v - smooth.level;
        std::vector<std::string> names;
        for (const auto &c : covariate_names) names.push_back(c);
        for (const auto &c : covariate_names) names.push_back(c + "*P");
        LinearOptions lo;
        lo.intercept = false;
        lo.se = SeType::robust_hc1;
        LinearFit ls = fit_ols(resid.col(0), resid.rightCols(2 * k), names, lo);
        b0 = ls.coefficients.head(k);
        gap = ls.coefficients.tail(k);
        if (cov) *cov = ls.vcov;
    };
    auto partial = [&](const Eigen::VectorXd &b0, const Eigen::VectorXd &gap) {
        Eigen::VectorXd out = v.col(0);
        if (k > 0) out -= v.middleCols(1, k) * b0 + v.rightCols(k) * gap;
        return out;
    };

    if (options.bandwidth) {
        fit.bandwidth = *options.bandwidth;
    } else {
        BandwidthSelection &sel = fit.selection;
        sel.cross_validated = true;
        for (int j = 0; j < kCandidates; ++j)
            sel.candidates.push_back(range * kSmallestFraction *
                                     std::pow(kLargestFraction / kSmallestFraction, j / double(kCandidates - 1)));
        Eigen::VectorXd b0, gap;
        bool pilot_ok = false;
        for (int j = kPilotCandidate; j < kCandidates && !pilot_ok; ++j) {
            try {
                linear_part(sel.candidates[static_cast<std::size_t>(j)], b0, gap, nullptr);
                pilot_ok = true;
            } catch (const NumericalError &) {
            }
        }
        if (!pilot_ok) throw NumericalError("no feasible pilot bandwidth for the partially linear fit");
        Eigen::VectorXd target = partial(b0, gap);
        int best = -1;
        for (int j = 0; j < kCandidates; ++j) {
            double score = kNaN, se = kNaN;
            try {
                auto cv = smoother.leave_one_out(target, sel.candidates[static_cast<std::size_t>(j)], options.min_neighbors);
                score = cv.score;
                se = cv.standard_error;
            } catch (const NumericalError &) {
            }
            sel.scores.push_back(score);
            sel.standard_errors.push_back(se);
            if (!std::isnan(score) && (best < 0 || score < sel.scores[static_cast<std::size_t>(best)])) best = j;
        }
        if (best < 0) throw NumericalError("every bandwidth candidate failed the neighbour condition");
        // Largest candidate within half a standard error of the minimum.
        const double threshold =
            sel.scores[static_cast<std::size_t>(best)] + 0.5 * sel.standard_errors[static_cast<std::size_t>(best)];
        int chosen = best;
        for (int j = best; j < kCandidates; ++j)
            if (!std::isnan(sel.scores[static_cast<std::size_t>(j)]) && sel.scores[static_cast<std::size_t>(j)] <= threshold)
                chosen = j;
        fit.bandwidth = sel.candidates[static_cast<std::size_t>(chosen)];
    }

    linear_part(fit.bandwidth, fit.beta0, fit.beta_gap, &fit.vcov);
    Eigen::VectorXd yp = partial(fit.beta0, fit.beta_gap);
    fit.p_sample = ps;
    fit.y_partial.assign(yp.data(), yp.data() + yp.size());

    fit.v_grid = options.v_grid;
    fit.in_support.resize(fit.v_grid.size());
    fit.k_hat.assign(fit.v_grid.size(), kNaN);
    std::vector<double> inside;
    for (std::size_t g = 0; g < fit.v_grid.size(); ++g) {
        fit.in_support[g] = support.contains(fit.v_grid[g]);
        if (fit.in_support[g]) inside.push_back(fit.v_grid[g]);
    }
    if (!inside.empty()) {
        auto res = smoother.fit(yp, inside, fit.bandwidth, options.min_neighbors);
        std::size_t r = 0;
        for (std::size_t g = 0; g < fit.v_grid.size(); ++g)
            if (fit.in_support[g]) fit.k_hat[g] = res.level(static_cast<Eigen::Index>(r++), 0);
    }
    return fit;
}

PartiallyLinearFit fit_partially_linear(const Dataset &data, const PropensityScores &scores, const Support &support,
                                        const PartiallyLinearOptions &options) {
    if (scores.size() != data.n_rows()) throw InputError("propensity scores do not align with the dataset");
    data.require_arms(2);
    const auto &cov = data.roles().covariates();
    return fit_partially_linear(data.vector(data.roles().outcome()), data.matrix(cov), scores.values, cov, support,
                                options);
}

std::vector<double> k_derivative(const PartiallyLinearFit &fit, std::span<const double> v_grid) {
    std::vector<double> out(v_grid.size(), kNaN);
    std::vector<double> inside;
    for (double v : v_grid)
        if (fit.support.contains(v)) inside.push_back(v);
    if (inside.empty()) return out;
    LocalLinearSmoother smoother(fit.p_sample, fit.threads);
    Eigen::Map<const Eigen::VectorXd> yp(fit.y_partial.data(), static_cast<Eigen::Index>(fit.y_partial.size()));
    auto res = smoother.fit(yp, inside, fit.bandwidth);
    std::size_t r = 0;
    for (std::size_t g = 0; g < v_grid.size(); ++g)
        if (fit.support.contains(v_grid[g])) out[g] = res.slope(static_cast<Eigen::Index>(r++), 0);
    return out;
}

MteCurve mte_curve(const PartiallyLinearFit &fit, const std::optional<Eigen::VectorXd> &x,
                   std::span<const double> v_grid) {
    Eigen::VectorXd point = x ? *x : fit.covariate_means;
    if (point.size() != fit.beta_gap.size())
        throw InputError("evaluation point has " + std::to_string(point.size()) + " covariates, fit has " +
                         std::to_string(fit.beta_gap.size()));
    MteCurve curve;
    curve.v_grid.assign(v_grid.begin(), v_grid.end());
    curve.eval_point = point;
    auto slope = k_derivative(fit, v_grid);
    const double shift = point.size() ? point.dot(fit.beta_gap) : 0.0;
    curve.values.resize(v_grid.size());
    curve.in_support.resize(v_grid.size());
    for (std::size_t g = 0; g < v_grid.size(); ++g) {
        curve.in_support[g] = fit.support.contains(v_grid[g]);
        curve.values[g] = curve.in_support[g] ? shift + slope[g] : kNaN;
    }
    return curve;
}

void write_curve_csv(const MteCurve &curve, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "v,mte,in_support,ci_lo,ci_hi\n";
    for (std::size_t g = 0; g < curve.size(); ++g) {
        double lo = g < curve.ci_lo.size() ? curve.ci_lo[g] : kNaN;
        double hi = g < curve.ci_hi.size() ? curve.ci_hi[g] : kNaN;
        out << fmt(curve.v_grid[g]) << ',' << fmt(curve.values[g]) << ',' << (curve.in_support[g] ? 1 : 0) << ','
            << fmt(lo) << ',' << fmt(hi) << '\n';
    }
}

MteCurve read_curve_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("v,mte,in_support,ci_lo,ci_hi", 0) != 0) throw InputError("'" + path + "' is not an MTE curve file");
    MteCurve curve;
    auto num = [](const std::string &s) {
        if (s.empty()) return kNaN;
        double v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{}) throw InputError("bad number '" + s + "' in curve file");
        return v;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 5) cells.emplace_back();
        curve.v_grid.push_back(num(cells[0]));
        curve.values.push_back(num(cells[1]));
        curve.in_support.push_back(cells[2] == "1");
        curve.ci_lo.push_back(num(cells[3]));
        curve.ci_hi.push_back(num(cells[4]));
    }
    return curve;
}

} // namespace mtekit
