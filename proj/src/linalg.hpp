#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace mtekit::detail {

/// Throws RankError naming the columns that add nothing to the span of the ones before them.
void require_full_rank(const Eigen::MatrixXd &design, const std::vector<std::string> &names, const std::string &context);

/// Prepends a column of ones.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd &x);

std::string join(const std::vector<std::string> &items, const char *sep = ", ");

} // namespace mtekit::detail
