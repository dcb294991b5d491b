#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mtekit {

/// Runs `body(i)` for i in [0, n) across up to `threads` workers (0 = hardware concurrency).
/// Work is split into fixed contiguous blocks, so results never depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body, unsigned threads = 0);

/// Epanechnikov kernel, 0.75 (1 - u^2) on |u| <= 1.
double epanechnikov(double u);

/** Local linear regression on one scalar regressor with an Epanechnikov kernel.
 *
 * The regressor is sorted once; each evaluation point touches only the observations inside its
 * window. Several response columns can be smoothed in the same pass.
 */
class LocalLinearSmoother {
  public:
    explicit LocalLinearSmoother(std::span<const double> x, unsigned threads = 0);

    struct Result {
        Eigen::MatrixXd level;            ///< points x responses
        Eigen::MatrixXd slope;            ///< points x responses
        std::vector<std::size_t> neighbors; ///< observations with positive kernel weight
        std::vector<double> self_weight;  ///< weight an observation sitting exactly at the point receives
    };

    /** Fits every column of `y` (rows aligned with the constructor's `x`) at each of `points`.
     *
     * \throws NumericalError naming the first point with fewer than `min_neighbors` observations in
     *         its window or a singular local design
     */
    Result fit(const Eigen::MatrixXd &y, std::span<const double> points, double bandwidth,
               std::size_t min_neighbors = 5) const;

    /// Fits at the observations themselves, returning levels in the original row order.
    Result fit_in_sample(const Eigen::MatrixXd &y, double bandwidth, std::size_t min_neighbors = 5) const;

    /// Mean squared leave-one-out residual and its standard error for a single response.
    struct CrossValidation {
        double score;
        double standard_error;
    };
    CrossValidation leave_one_out(const Eigen::VectorXd &y, double bandwidth, std::size_t min_neighbors = 5) const;

    std::size_t size() const { return sorted_.size(); }
    double min() const { return sorted_.front(); }
    double max() const { return sorted_.back(); }

  private:
    std::vector<double> sorted_;
    std::vector<std::size_t> order_;
    unsigned threads_;
};

} // namespace mtekit
