#include "dynfilt/solvers.hpp"

#include <cmath>
#include <string>

#include "dynfilt/errors.hpp"

namespace dynfilt {

namespace {

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + " contains non-finite values");
}

void require_length(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
  }
}

void validate_config(const IstaConfig& cfg, Index n) {
  if (cfg.max_iters < 1) throw ArgumentError("IstaConfig.max_iters must be >= 1");
  if (!(cfg.rel_tol > 0.0)) throw ArgumentError("IstaConfig.rel_tol must be positive");
  if (cfg.step_size && !(*cfg.step_size > 0.0 && std::isfinite(*cfg.step_size))) {
    throw ArgumentError("IstaConfig.step_size must be positive and finite");
  }
  if (cfg.warm_start) {
    require_length(*cfg.warm_start, n, "warm start");
    require_finite(*cfg.warm_start, "warm start");
  }
}

// Shared proximal-gradient loop for
//   F(z) = ||y - B z||^2 + kappa ||W z - p||^2 + sum_i l1[i] |z[i]|.
// With half-gradient h = B^T(y - Bz) + kappa W^T(p - Wz), one iteration is
//   z <- shrink(z + step * h, step * l1 / 2),
// which is the proximal step of size step/2 on F.
struct Problem {
  const LinearOperator& B;
  const Vector& y;
  const LinearOperator* W;  // nullptr when kappa == 0
  const Vector* prediction;
  double kappa;
  const Vector& l1;
};

double evaluate(const Problem& p, const Vector& z, const Vector& residual, Vector& scratch) {
  double value = residual.squaredNorm() + p.l1.cwiseProduct(z).cwiseAbs().sum();
  if (p.kappa > 0.0) {
    p.W->apply(z, scratch);
    value += p.kappa * (scratch - *p.prediction).squaredNorm();
  }
  return value;
}

SolverResult run_ista(const Problem& p, double step, const IstaConfig& cfg) {
  const Index n = p.B.cols();
  SolverResult out;
  out.step_size = step * (1.0 + p.kappa);

  Vector z = cfg.warm_start ? *cfg.warm_start : Vector::Zero(n);
  Vector z_next(n);
  Vector bz(p.B.rows());
  Vector residual(p.B.rows());
  Vector grad(n);
  Vector u(n);
  Vector wz;
  Vector back;

  const bool unscaled = cfg.threshold_rule == ThresholdRule::kUnscaled;
  const Vector thresholds = unscaled ? Vector(p.l1) : Vector(0.5 * step * p.l1);

  for (int it = 0; it < cfg.max_iters; ++it) {
    p.B.apply(z, bz);
    residual = p.y - bz;
    if (cfg.record_trace) out.objective_trace.push_back(evaluate(p, z, residual, wz));

    p.B.apply_adjoint(residual, grad);
    if (p.kappa > 0.0) {
      p.W->apply(z, wz);
      p.W->apply_adjoint(*p.prediction - wz, back);
      grad += p.kappa * back;
    }
    u = z + step * grad;
    z_next = soft_threshold(u, thresholds);

    const double change = (z_next - z).norm();
    const double scale = z_next.norm();
    z.swap(z_next);
    out.iterations = it + 1;
    if (!std::isfinite(change)) throw NumericalError("ISTA iterate became non-finite");
    if (change <= cfg.rel_tol * scale) {
      out.converged = true;
      break;
    }
  }

  if (cfg.record_trace) {
    p.B.apply(z, bz);
    residual = p.y - bz;
    out.objective_trace.push_back(evaluate(p, z, residual, wz));
  }
  out.coefficients = std::move(z);
  return out;
}

}  // namespace

WeightVector::WeightVector(Vector values) : values_(std::move(values)) {
  for (Index i = 0; i < values_.size(); ++i) {
    if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) {
      throw ArgumentError("weights must be strictly positive and finite (entry " +
                          std::to_string(i) + ")");
    }
  }
}

WeightVector WeightVector::uniform(Index n, double value) {
  return WeightVector(Vector::Constant(n, value));
}

double auto_step_size(const LinearOperator& B, const LinearOperator& W, double kappa) {
  double lipschitz = operator_norm_sq(B);
  if (kappa > 0.0) lipschitz += kappa * operator_norm_sq(W);
  lipschitz /= (1.0 + kappa);
  return lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
}

SolverResult solve_weighted_bpdn(const LinearOperator& A, const Vector& y,
                                 const WeightVector& weights, double lambda0,
                                 const IstaConfig& cfg) {
  require_length(y, A.rows(), "measurements");
  require_length(weights.values(), A.cols(), "weights");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) {
    throw ArgumentError("lambda0 must be finite and >= 0");
  }
  require_finite(y, "measurements");
  validate_config(cfg, A.cols());

  const Vector l1 = lambda0 * weights.values();
  const double step = cfg.step_size ? *cfg.step_size : auto_step_size(A, A, 0.0);
  return run_ista(Problem{A, y, nullptr, nullptr, 0.0, l1}, step, cfg);
}

SolverResult solve_bpdn_df(const LinearOperator& A, const Vector& y, double gamma, double kappa,
                           const Vector& prediction, const LinearOperator& W,
                           const IstaConfig& cfg) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ArgumentError("kappa must be >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ArgumentError("gamma must be >= 0");
  require_length(y, A.rows(), "measurements");
  require_length(prediction, W.rows(), "prediction");
  if (A.cols() != W.rows()) throw DimensionError("solve_bpdn_df: A.cols != W.rows");
  require_finite(y, "measurements");
  require_finite(prediction, "prediction");
  validate_config(cfg, W.cols());

  const LinearOperator B = compose(A, W);
  const Vector l1 = Vector::Constant(B.cols(), gamma);
  const double zeta = cfg.step_size ? *cfg.step_size : auto_step_size(B, W, kappa);
  const double step = zeta / (1.0 + kappa);
  if (kappa == 0.0) return run_ista(Problem{B, y, nullptr, nullptr, 0.0, l1}, step, cfg);
  return run_ista(Problem{B, y, &W, &prediction, kappa, l1}, step, cfg);
}

double objective_weighted_bpdn(const Vector& z, const LinearOperator& A, const Vector& y,
                               const WeightVector& weights, double lambda0) {
  require_length(z, A.cols(), "coefficients");
  require_length(y, A.rows(), "measurements");
  require_length(weights.values(), A.cols(), "weights");
  return (y - A.forward(z)).squaredNorm() + lambda0 * weights.values().cwiseProduct(z).cwiseAbs().sum();
}

double objective_bpdn_df(const Vector& z, const LinearOperator& A, const Vector& y, double gamma,
                         double kappa, const Vector& prediction, const LinearOperator& W) {
  require_length(z, W.cols(), "coefficients");
  require_length(y, A.rows(), "measurements");
  require_length(prediction, W.rows(), "prediction");
  if (A.cols() != W.rows()) throw DimensionError("objective_bpdn_df: A.cols != W.rows");
  const Vector wz = W.forward(z);
  return (y - A.forward(wz)).squaredNorm() + gamma * z.cwiseAbs().sum() +
         kappa * (wz - prediction).squaredNorm();
}

}  // namespace dynfilt
