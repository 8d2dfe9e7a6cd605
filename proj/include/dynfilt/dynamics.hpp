#pragma once

#include <functional>
#include <optional>

#include "dynfilt/operators.hpp"

namespace dynfilt {

// Known state-transition function f(x, n), optionally Lipschitz with constant f*
// (smoothness_bound). Linear models can also hand out their matrix F_n, which the
// Kalman baseline needs.
class DynamicsModel {
 public:
  using ApplyFn = std::function<Vector(const Vector& state, int frame)>;
  using MatrixFn = std::function<Matrix(int frame)>;

  DynamicsModel(ApplyFn apply, std::optional<double> smoothness_bound = std::nullopt,
                MatrixFn matrix = {});

  static DynamicsModel identity();
  // f(x) = rho * x, f* = |rho|.
  static DynamicsModel scaled(double rho);
  // f(x) = F x with f* = ||F||_2.
  static DynamicsModel linear(Matrix F);

  Vector apply(const Vector& state, int frame) const { return apply_(state, frame); }
  std::optional<double> smoothness_bound() const { return smoothness_bound_; }
  bool is_linear() const { return static_cast<bool>(matrix_) || identity_like_; }
  // Dense F_n of size n x n. Throws StateError for nonlinear models.
  Matrix matrix(Index n, int frame) const;

 private:
  ApplyFn apply_;
  std::optional<double> smoothness_bound_;
  MatrixFn matrix_;
  bool identity_like_ = false;
  double scale_ = 1.0;
};

}  // namespace dynfilt
