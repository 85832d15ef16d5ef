#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mixcourse {

// Minimum-cost one-to-one assignment for a rectangular cost matrix with
// rows <= cols (shortest augmenting path with potentials). Returns, for each
// row, the column it is assigned to. Throws InputError on non-finite costs
// or rows > cols.
std::vector<int> hungarian_assign(const Eigen::MatrixXd &cost);

} // namespace mixcourse
