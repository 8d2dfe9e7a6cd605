#include "dynfilt/dynamics.hpp"

#include <cmath>

#include "dynfilt/errors.hpp"

namespace dynfilt {

DynamicsModel::DynamicsModel(ApplyFn apply, std::optional<double> smoothness_bound,
                             MatrixFn matrix)
    : apply_(std::move(apply)), smoothness_bound_(smoothness_bound), matrix_(std::move(matrix)) {
  if (!apply_) throw ArgumentError("DynamicsModel needs an apply function");
  if (smoothness_bound_ && !(*smoothness_bound_ > 0.0)) {
    throw ArgumentError("DynamicsModel smoothness bound must be positive");
  }
}

DynamicsModel DynamicsModel::identity() { return scaled(1.0); }

DynamicsModel DynamicsModel::scaled(double rho) {
  if (!std::isfinite(rho) || rho == 0.0) throw ArgumentError("scaled dynamics needs finite rho != 0");
  DynamicsModel m([rho](const Vector& x, int) -> Vector { return rho * x; }, std::abs(rho));
  m.identity_like_ = true;
  m.scale_ = rho;
  return m;
}

DynamicsModel DynamicsModel::linear(Matrix F) {
  if (F.rows() != F.cols()) throw DimensionError("linear dynamics needs a square matrix");
  const double lip = Eigen::JacobiSVD<Matrix>(F).singularValues()(0);
  auto shared = std::make_shared<const Matrix>(std::move(F));
  return DynamicsModel(
      [shared](const Vector& x, int) -> Vector {
        if (x.size() != shared->cols()) throw DimensionError("linear dynamics: state length");
        return *shared * x;
      },
      lip > 0.0 ? std::optional<double>(lip) : std::nullopt,
      [shared](int) { return *shared; });
}

Matrix DynamicsModel::matrix(Index n, int frame) const {
  if (identity_like_) return scale_ * Matrix::Identity(n, n);
  if (!matrix_) throw StateError("dynamics model is not linear");
  Matrix F = matrix_(frame);
  if (F.rows() != n || F.cols() != n) throw DimensionError("dynamics matrix has the wrong size");
  return F;
}

}  // namespace dynfilt
