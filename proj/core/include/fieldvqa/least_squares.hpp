#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fieldvqa::linalg {

struct LeastSquaresSolution {
  std::vector<double> coefficients;
  std::vector<double> singular_values;  // descending
  std::size_t rank = 0;
};

// Minimum-norm minimiser of ||A*beta - rhs||_2, with A given column by
// column (each of length n >= columns.size()). Householder QR reduces A to
// a p x p triangle whose SVD (one-sided Jacobi) exposes the rank: singular
// values at or below relative_tolerance * max are treated as zero.
LeastSquaresSolution solve_least_squares(std::span<const std::vector<double>> columns, std::span<const double> rhs,
                                         double relative_tolerance = 1e-10);

}  // namespace fieldvqa::linalg
