#include "fieldvqa/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fieldvqa::linalg {

namespace {

double norm(std::span<const double> v) {
  // Scaled to avoid overflow on large magnitudes.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += (x / scale) * (x / scale);
  return scale * std::sqrt(sum);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// In-place Householder reflection of v[k..n) applied to target[k..n).
void reflect(const std::vector<double>& v, std::size_t k, std::vector<double>& target) {
  double s = 0.0;
  for (std::size_t i = k; i < target.size(); ++i) s += v[i] * target[i];
  s *= 2.0;
  for (std::size_t i = k; i < target.size(); ++i) target[i] -= s * v[i];
}

}  // namespace

LeastSquaresSolution solve_least_squares(std::span<const std::vector<double>> columns, std::span<const double> rhs,
                                         double relative_tolerance) {
  const std::size_t p = columns.size();
  const std::size_t n = rhs.size();
  if (p == 0) throw std::invalid_argument("least squares needs at least one column");
  if (n < p) throw std::invalid_argument("least squares needs at least as many rows as columns");
  for (const auto& c : columns) {
    if (c.size() != n) throw std::invalid_argument("least squares column length mismatch");
  }

  std::vector<std::vector<double>> a(columns.begin(), columns.end());
  std::vector<double> b(rhs.begin(), rhs.end());

  for (std::size_t k = 0; k < p; ++k) {
    std::vector<double> v(n, 0.0);
    std::copy(a[k].begin() + static_cast<std::ptrdiff_t>(k), a[k].end(), v.begin() + static_cast<std::ptrdiff_t>(k));
    const double alpha = norm(std::span(v).subspan(k));
    if (alpha == 0.0) continue;
    v[k] += v[k] >= 0.0 ? alpha : -alpha;
    const double vn = norm(std::span(v).subspan(k));
    for (std::size_t i = k; i < n; ++i) v[i] /= vn;
    for (std::size_t j = k; j < p; ++j) reflect(v, k, a[j]);
    reflect(v, k, b);
  }

  // u holds R's columns; Jacobi rotations orthogonalise them, accumulating V.
  std::vector<std::vector<double>> u(p, std::vector<double>(p, 0.0));
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i <= j; ++i) u[j][i] = a[j][i];
  }
  std::vector<std::vector<double>> vmat(p, std::vector<double>(p, 0.0));
  for (std::size_t j = 0; j < p; ++j) vmat[j][j] = 1.0;

  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < p; ++i) {
      for (std::size_t j = i + 1; j < p; ++j) {
        const double alpha = dot(u[i], u[i]);
        const double beta = dot(u[j], u[j]);
        const double gamma = dot(u[i], u[j]);
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t r = 0; r < p; ++r) {
          const double ui = u[i][r];
          const double uj = u[j][r];
          u[i][r] = c * ui - s * uj;
          u[j][r] = s * ui + c * uj;
          const double vi = vmat[i][r];
          const double vj = vmat[j][r];
          vmat[i][r] = c * vi - s * vj;
          vmat[j][r] = s * vi + c * vj;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(p);
  for (std::size_t j = 0; j < p; ++j) sigma[j] = norm(u[j]);
  const double sigma_max = *std::max_element(sigma.begin(), sigma.end());

  LeastSquaresSolution out;
  out.coefficients.assign(p, 0.0);
  const std::span<const double> qtb(b.data(), p);
  for (std::size_t j = 0; j < p; ++j) {
    if (sigma_max == 0.0 || sigma[j] <= relative_tolerance * sigma_max) continue;
    ++out.rank;
    // beta += v_j * (u_j . qtb) / sigma_j^2, since u_j is unnormalised (= sigma_j * unit).
    const double weight = dot(u[j], qtb) / (sigma[j] * sigma[j]);
    for (std::size_t r = 0; r < p; ++r) out.coefficients[r] += weight * vmat[j][r];
  }
  out.singular_values = sigma;
  std::sort(out.singular_values.begin(), out.singular_values.end(), std::greater<>());
  return out;
}

}  // namespace fieldvqa::linalg
