#include "mtekit/local_linear.hpp"
#include "mtekit/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

namespace mtekit {

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body, unsigned threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

double epanechnikov(double u) { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

LocalLinearSmoother::LocalLinearSmoother(std::span<const double> x, unsigned threads) : threads_(threads) {
    if (x.size() < 2) throw InputError("local linear regression needs at least two observations");
    order_.resize(x.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    sorted_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) sorted_[i] = x[order_[i]];
}

LocalLinearSmoother::Result LocalLinearSmoother::fit(const Eigen::MatrixXd &y, std::span<const double> points,
                                                     double bandwidth, std::size_t min_neighbors) const {
    if (static_cast<std::size_t>(y.rows()) != sorted_.size())
        throw InputError("response rows do not match the smoother's regressor");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InputError("bandwidth must be positive");

    const std::size_t m = points.size();
    const Eigen::Index q = y.cols();
    Result out;
    out.level.resize(static_cast<Eigen::Index>(m), q);
    out.slope.resize(static_cast<Eigen::Index>(m), q);
    out.neighbors.resize(m);
    out.self_weight.resize(m);

    // Window bounds and the neighbour precondition are checked up front so the reported point is
    // always the first offender.
    std::vector<std::pair<std::size_t, std::size_t>> window(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double p = points[k];
        auto lo = std::upper_bound(sorted_.begin(), sorted_.end(), p - bandwidth);
        auto hi = std::lower_bound(sorted_.begin(), sorted_.end(), p + bandwidth);
        window[k] = {static_cast<std::size_t>(lo - sorted_.begin()), static_cast<std::size_t>(hi - sorted_.begin())};
        std::size_t count = window[k].second > window[k].first ? window[k].second - window[k].first : 0;
        out.neighbors[k] = count;
        if (count < min_neighbors) {
            std::ostringstream msg;
            msg << "bandwidth " << bandwidth << " leaves only " << count << " effective neighbours at P = " << p
                << " (need " << min_neighbors << ")";
            throw NumericalError(msg.str());
        }
    }

    // Row-major copy in sorted order keeps each observation's responses contiguous.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ys(y.rows(), q);
    for (std::size_t i = 0; i < sorted_.size(); ++i) ys.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(order_[i]));

    const double inv_h2 = 1.0 / (bandwidth * bandwidth);
    parallel_for(
        m,
        [&](std::size_t k) {
            const double p = points[k];
            double s0 = 0, s1 = 0, s2 = 0;
            Eigen::VectorXd t0 = Eigen::VectorXd::Zero(q), t1 = Eigen::VectorXd::Zero(q);
            for (std::size_t j = window[k].first; j < window[k].second; ++j) {
                const double d = sorted_[j] - p;
                const double w = 1.0 - d * d * inv_h2;
                if (w <= 0.0) continue;
                const double wd = w * d;
                s0 += w;
                s1 += wd;
                s2 += wd * d;
                const double *row = ys.data() + static_cast<Eigen::Index>(j) * q;
                for (Eigen::Index r = 0; r < q; ++r) {
                    t0[r] += w * row[r];
                    t1[r] += wd * row[r];
                }
            }
            const double det = s0 * s2 - s1 * s1;
            if (!(det > 1e-12 * s0 * s2)) {
                std::ostringstream msg;
                msg << "singular local linear design at P = " << p << " (bandwidth " << bandwidth << ")";
                throw NumericalError(msg.str());
            }
            const auto row = static_cast<Eigen::Index>(k);
            for (Eigen::Index r = 0; r < q; ++r) {
                out.level(row, r) = (s2 * t0[r] - s1 * t1[r]) / det;
                out.slope(row, r) = (s0 * t1[r] - s1 * t0[r]) / det;
            }
            out.self_weight[k] = s2 / det;
        },
        threads_);
    return out;
}

LocalLinearSmoother::Result LocalLinearSmoother::fit_in_sample(const Eigen::MatrixXd &y, double bandwidth,
                                                               std::size_t min_neighbors) const {
    Result sorted = fit(y, sorted_, bandwidth, min_neighbors);
    Result out;
    out.level.resize(sorted.level.rows(), sorted.level.cols());
    out.slope.resize(sorted.slope.rows(), sorted.slope.cols());
    out.neighbors.resize(sorted_.size());
    out.self_weight.resize(sorted_.size());
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(i), dst = static_cast<Eigen::Index>(order_[i]);
        out.level.row(dst) = sorted.level.row(src);
        out.slope.row(dst) = sorted.slope.row(src);
        out.neighbors[order_[i]] = sorted.neighbors[i];
        out.self_weight[order_[i]] = sorted.self_weight[i];
    }
    return out;
}

LocalLinearSmoother::CrossValidation LocalLinearSmoother::leave_one_out(const Eigen::VectorXd &y, double bandwidth,
                                                                        std::size_t min_neighbors) const {
    Result r = fit_in_sample(y, bandwidth, min_neighbors);
    const auto n = static_cast<double>(y.size());
    Eigen::VectorXd sq(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double leverage = r.self_weight[static_cast<std::size_t>(i)];
        if (!(leverage < 1.0 - 1e-12))
            throw NumericalError("leave-one-out fit undefined: an observation carries all of its local weight");
        const double e = (y[i] - r.level(i, 0)) / (1.0 - leverage);
        sq[i] = e * e;
    }
    const double mean = sq.mean();
    const double var = (sq.array() - mean).square().sum() / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

} // namespace mtekit
