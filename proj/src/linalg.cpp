#include "linalg.hpp"
#include "mtekit/error.hpp"

#include <Eigen/QR>

namespace mtekit::detail {

std::string join(const std::vector<std::string> &items, const char *sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

void require_full_rank(const Eigen::MatrixXd &design, const std::vector<std::string> &names, const std::string &context) {
    const Eigen::Index n = design.rows(), k = design.cols();
    if (n < k)
        throw RankError(context + ": " + std::to_string(n) + " rows cannot identify " + std::to_string(k) + " coefficients");
    Eigen::MatrixXd scaled = design;
    for (Eigen::Index j = 0; j < k; ++j) {
        double norm = scaled.col(j).norm();
        if (norm > 0) scaled.col(j) /= norm;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> full(scaled);
    full.setThreshold(1e-10);
    if (full.rank() == k) return;

    std::vector<std::string> collinear;
    Eigen::Index rank = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled.leftCols(j + 1));
        qr.setThreshold(1e-10);
        if (qr.rank() > rank) ++rank;
        else collinear.push_back(static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                           : "column " + std::to_string(j));
    }
    throw RankError(context + ": design matrix is rank deficient; collinear column(s): " + join(collinear));
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd &x) {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

} // namespace mtekit::detail
