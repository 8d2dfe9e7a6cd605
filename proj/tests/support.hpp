#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "dynfilt/operators.hpp"

namespace dynfilt::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

inline Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Vector random_sparse(Index n, int nonzeros, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  Vector x = Vector::Zero(n);
  for (int k = 0; k < nonzeros; ++k) x[idx[static_cast<std::size_t>(k)]] = (sign(rng) ? 1.0 : -1.0) * amp(rng);
  return x;
}

// Cyclic coordinate descent for min ||y - A z||^2 + sum_i t_i |z_i|, run until the
// largest coordinate move is below `tol`. Independent of the ISTA code path.
inline Vector coordinate_descent_lasso(const Matrix& A, const Vector& y, const Vector& t,
                                       double tol = 1e-15, int max_sweeps = 1000000) {
  const Index n = A.cols();
  Vector z = Vector::Zero(n);
  Vector r = y;
  const Vector col_sq = A.colwise().squaredNorm();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double biggest = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (col_sq[i] == 0.0) continue;
      const double rho = A.col(i).dot(r) + col_sq[i] * z[i];
      const double mag = std::max(std::abs(rho) - 0.5 * t[i], 0.0);
      const double zi = std::copysign(mag, rho) / col_sq[i];
      const double delta = zi - z[i];
      if (delta != 0.0) {
        r -= delta * A.col(i);
        z[i] = zi;
        biggest = std::max(biggest, std::abs(delta));
      }
    }
    if (biggest < tol) break;
  }
  return z;
}

inline double lasso_objective(const Matrix& A, const Vector& y, const Vector& t, const Vector& z) {
  return (y - A * z).squaredNorm() + t.cwiseProduct(z).cwiseAbs().sum();
}

}  // namespace dynfilt::testing
