#include "wsod/assignment.hpp"

#include <limits>

#include "wsod/core.hpp"

namespace wsod {

std::vector<std::size_t> hungarian_assign(const std::vector<double>& cost, std::size_t rows,
                                          std::size_t cols) {
  require(rows <= cols, "hungarian_assign: more rows than columns");
  require(cost.size() == rows * cols, "hungarian_assign: cost shape mismatch");
  if (rows == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source.
  std::vector<double> u(rows + 1, 0.0);
  std::vector<double> v(cols + 1, 0.0);
  std::vector<std::size_t> match(cols + 1, 0);  // match[j] = row assigned to column j
  std::vector<std::size_t> way(cols + 1, 0);

  for (std::size_t r = 1; r <= rows; ++r) {
    match[0] = r;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, kInf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> out(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (match[j] != 0) out[match[j] - 1] = j - 1;
  }
  return out;
}

double assignment_cost(const std::vector<double>& cost, std::size_t cols,
                       const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r) total += cost[r * cols + assignment[r]];
  return total;
}

}  // namespace wsod
