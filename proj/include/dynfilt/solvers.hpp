#pragma once

#include <optional>
#include <vector>

#include "dynfilt/operators.hpp"

namespace dynfilt {

// Strictly positive, finite per-coefficient l1 weights.
class WeightVector {
 public:
  explicit WeightVector(Vector values);
  static WeightVector uniform(Index n, double value = 1.0);

  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

 private:
  Vector values_;
};

enum class ThresholdRule {
  // Shrink by step * weight / 2: an exact proximal-gradient step on the stated objective.
  kProximal,
  // Shrink by the raw l1 weight regardless of the step, as written in the analysis
  // recursion. Used only by the theorem-verification tooling.
  kUnscaled,
};

struct IstaConfig {
  // Gradient step on the half-gradient A^T(y - Az) + ...; std::nullopt selects 1/L.
  std::optional<double> step_size;
  int max_iters = 5000;
  // Stop once ||z_next - z|| <= rel_tol * ||z_next||.
  double rel_tol = 1e-6;
  std::optional<Vector> warm_start;
  ThresholdRule threshold_rule = ThresholdRule::kProximal;
  bool record_trace = true;
};

struct SolverResult {
  Vector coefficients;
  int iterations = 0;
  // Objective at the starting point followed by the value after every iteration.
  std::vector<double> objective_trace;
  bool converged = false;
  double step_size = 0.0;
};

// Approximately minimizes ||y - A z||^2 + lambda0 * sum_i |weights[i] z[i]|.
SolverResult solve_weighted_bpdn(const LinearOperator& A, const Vector& y,
                                 const WeightVector& weights, double lambda0,
                                 const IstaConfig& cfg = {});

// Approximately minimizes ||y - A W z||^2 + gamma ||z||_1 + kappa ||W z - prediction||^2.
SolverResult solve_bpdn_df(const LinearOperator& A, const Vector& y, double gamma, double kappa,
                           const Vector& prediction, const LinearOperator& W,
                           const IstaConfig& cfg = {});

double objective_weighted_bpdn(const Vector& z, const LinearOperator& A, const Vector& y,
                               const WeightVector& weights, double lambda0);

double objective_bpdn_df(const Vector& z, const LinearOperator& A, const Vector& y, double gamma,
                         double kappa, const Vector& prediction, const LinearOperator& W);

// Largest step for the half-gradient iteration on ||y - B z||^2 + kappa ||W z - p||^2,
// expressed before the 1/(1 + kappa) scaling applied inside solve_bpdn_df.
double auto_step_size(const LinearOperator& B, const LinearOperator& W, double kappa);

}  // namespace dynfilt
