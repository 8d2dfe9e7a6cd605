#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <variant>

namespace dynfilt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Every stochastic component draws from a generator owned by a single trial.
using Rng = std::mt19937_64;

// Immutable real linear map R^cols -> R^rows with its adjoint.
//
// Dense operators run through the dispatched kernels; identity operators are
// recognised so that compositions with the (default identity) dictionary cost
// nothing. Copies share the underlying storage.
class LinearOperator {
 public:
  using ApplyFn = std::function<void(const Vector& in, Vector& out)>;

  static LinearOperator dense(Matrix m);
  static LinearOperator identity(Index n);
  // forward: R^cols -> R^rows, adjoint: R^rows -> R^cols. out is pre-sized.
  static LinearOperator implicit(Index rows, Index cols, ApplyFn forward, ApplyFn adjoint);

  Index rows() const;
  Index cols() const;

  // y is resized if needed.
  void apply(const Vector& x, Vector& y) const;
  void apply_adjoint(const Vector& v, Vector& u) const;
  Vector forward(const Vector& x) const;
  Vector adjoint(const Vector& v) const;

  bool is_identity() const;
  bool is_dense() const;
  // Throws StateError when the operator is not stored densely.
  const Matrix& matrix() const;
  // Materializes any operator by applying it to the canonical basis.
  Matrix to_dense() const;

 private:
  struct Identity {
    Index n;
  };
  struct Implicit {
    Index rows;
    Index cols;
    ApplyFn forward;
    ApplyFn adjoint;
  };
  using Storage = std::variant<Matrix, Identity, Implicit>;

  explicit LinearOperator(std::shared_ptr<const Storage> s) : storage_(std::move(s)) {}
  std::shared_ptr<const Storage> storage_;
};

// outer ∘ inner. Identity factors are elided; two dense factors are multiplied out.
LinearOperator compose(const LinearOperator& outer, const LinearOperator& inner);

// M x N matrix of i.i.d. standard normals with every column rescaled to unit norm.
LinearOperator gaussian_measurement(Index rows, Index cols, Rng& rng);

// Largest squared singular value of op by power iteration on op^T op, multiplied by
// a 1.01 safety factor so step sizes derived from it stay on the safe side.
double operator_norm_sq(const LinearOperator& op, double tol = 1e-6, int max_iters = 20000);

inline constexpr double kNormSafetyFactor = 1.01;

// out[i] = sign(u[i]) * max(|u[i]| - t[i], 0); the proximal map of z -> ||t .* z||_1.
// Throws ArgumentError on a negative or NaN threshold.
Vector soft_threshold(const Vector& u, const Vector& t);
Vector soft_threshold(const Vector& u, double t);

}  // namespace dynfilt
