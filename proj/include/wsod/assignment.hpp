#pragma once

#include <cstddef>
#include <vector>

namespace wsod {

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// Kuhn-Munkres with potentials, O(rows^2 * cols). `cost` is row-major.
/// Returns the column chosen for each row.
std::vector<std::size_t> hungarian_assign(const std::vector<double>& cost, std::size_t rows,
                                          std::size_t cols);

/// Total cost of an assignment, summed in row order.
double assignment_cost(const std::vector<double>& cost, std::size_t cols,
                       const std::vector<std::size_t>& assignment);

}  // namespace wsod
