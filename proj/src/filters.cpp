#include "dynfilt/filters.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dynfilt/errors.hpp"

namespace dynfilt {

namespace {

constexpr double kEmDenominatorFloor = 1e-12;

Vector previous_or_zero(const FilterState& state, Index n) {
  if (state.previous_estimate.size() == 0) return Vector::Zero(n);
  if (state.previous_estimate.size() != n) {
    throw DimensionError("filter state: previous estimate has length " +
                         std::to_string(state.previous_estimate.size()) + ", expected " +
                         std::to_string(n));
  }
  return state.previous_estimate;
}

void check_dims(const Vector& y, const LinearOperator& phi, const LinearOperator& W) {
  if (y.size() != phi.rows()) throw DimensionError("measurement length != Phi.rows");
  if (phi.cols() != W.rows()) throw DimensionError("Phi.cols != W.rows");
}

// Propagated previous estimate mapped back to coefficients: W^T f(W z_{n-1}, n).
Vector coefficient_prediction(const Vector& signal_prediction, const LinearOperator& W) {
  return W.is_identity() ? signal_prediction : W.adjoint(signal_prediction);
}

double em_change(const Vector& previous, const Vector& current) {
  return (previous - current).squaredNorm() / std::max(previous.squaredNorm(), kEmDenominatorFloor);
}

IstaConfig ista_config(const SolverSettings& s, std::optional<Vector> warm = std::nullopt) {
  IstaConfig cfg;
  cfg.max_iters = s.max_iters;
  cfg.rel_tol = s.rel_tol;
  cfg.warm_start = std::move(warm);
  cfg.record_trace = false;
  return cfg;
}

// Generic EM loop shared by both reweighted filters. `update` maps the latest
// coefficients to the next weight vector.
template <class Update>
StepResult run_em(const LinearOperator& B, const Vector& y, double lambda0, Vector weights,
                  Vector warm, double tol, int max_iters, const SolverSettings& solver,
                  FilterState state, Update update) {
  StepResult out;
  out.diagnostics.em_converged = false;
  Vector previous;
  Vector z;
  for (int t = 0; t < max_iters; ++t) {
    const auto res =
        solve_weighted_bpdn(B, y, WeightVector(weights), lambda0, ista_config(solver, warm));
    out.diagnostics.solver_iterations += res.iterations;
    out.diagnostics.solver_converged = out.diagnostics.solver_converged && res.converged;
    out.diagnostics.em_iterations = t + 1;
    z = res.coefficients;
    if (t > 0) {
      const double change = em_change(previous, z);
      out.diagnostics.em_changes.push_back(change);
      if (!std::isfinite(change)) throw NumericalError("EM coefficient change is not finite");
      if (change < tol) {
        out.diagnostics.em_converged = true;
        break;
      }
    }
    if (t + 1 < max_iters) weights = update(z);
    previous = z;
    warm = z;
  }
  state.last_weights = std::move(weights);
  out.estimate = z;
  out.state = std::move(state);
  return out;
}

}  // namespace

void Rwl1Config::validate() const {
  if (!(lambda0 > 0.0 && beta > 0.0 && eta > 0.0)) {
    throw ArgumentError("RWL1 lambda0, beta and eta must be strictly positive");
  }
  if (!(em_rel_tol > 0.0 && em_rel_tol < 1.0)) throw ArgumentError("em_rel_tol must lie in (0, 1)");
  if (em_max_iters < 1) throw ArgumentError("em_max_iters must be >= 1");
}

void Rwl1DfConfig::validate() const {
  if (!(lambda0 > 0.0 && tau > 0.0 && beta > 0.0)) {
    throw ArgumentError("RWL1-DF lambda0, tau and beta must be strictly positive");
  }
  if (!(eta > 0.0)) throw ArgumentError("RWL1-DF eta must be strictly positive (1 - 2p/S <= 0?)");
  if (!(em_rel_tol > 0.0 && em_rel_tol < 1.0)) throw ArgumentError("em_rel_tol must lie in (0, 1)");
  if (em_max_iters < 1) throw ArgumentError("em_max_iters must be >= 1");
}

Vector rwl1_weights(const Vector& z, double beta, double eta) {
  return (beta / (z.array().abs() + eta)).matrix();
}

Vector rwl1_df_weights(const Vector& z, const Vector& prediction, double tau, double beta,
                       double eta) {
  if (z.size() != prediction.size()) throw DimensionError("rwl1_df_weights: length mismatch");
  return (2.0 * tau / (beta * z.array().abs() + prediction.array().abs() + eta)).matrix();
}

StepResult bpdn_step(const FilterState& state, const Vector& y, const LinearOperator& phi,
                     const LinearOperator& W, double gamma, const SolverSettings& solver) {
  check_dims(y, phi, W);
  const LinearOperator B = compose(phi, W);
  const auto res = solve_weighted_bpdn(B, y, WeightVector::uniform(B.cols()), gamma, ista_config(solver));
  StepResult out;
  out.estimate = res.coefficients;
  out.state = state;
  out.diagnostics.solver_iterations = res.iterations;
  out.diagnostics.solver_converged = res.converged;
  return out;
}

StepResult rwl1_step(const FilterState& state, const Vector& y, const LinearOperator& phi,
                     const LinearOperator& W, const Rwl1Config& cfg, const SolverSettings& solver) {
  cfg.validate();
  check_dims(y, phi, W);
  const LinearOperator B = compose(phi, W);
  return run_em(B, y, cfg.lambda0, Vector::Ones(B.cols()), Vector::Zero(B.cols()), cfg.em_rel_tol,
                cfg.em_max_iters, solver, state,
                [&](const Vector& z) { return rwl1_weights(z, cfg.beta, cfg.eta); });
}

StepResult bpdn_df_step(const FilterState& state, int frame, const Vector& y,
                        const LinearOperator& phi, const LinearOperator& W,
                        const DynamicsModel& dynamics, double gamma, double kappa,
                        const SolverSettings& solver) {
  check_dims(y, phi, W);
  const Vector previous = previous_or_zero(state, W.cols());
  const Vector prediction = dynamics.apply(W.forward(previous), frame);
  if (prediction.size() != W.rows()) throw DimensionError("dynamics output length != W.rows");
  const auto res = solve_bpdn_df(phi, y, gamma, kappa, prediction, W,
                                 ista_config(solver, coefficient_prediction(prediction, W)));
  StepResult out;
  out.estimate = res.coefficients;
  out.state = state;
  out.state.previous_estimate = res.coefficients;
  out.diagnostics.solver_iterations = res.iterations;
  out.diagnostics.solver_converged = res.converged;
  return out;
}

StepResult rwl1_df_step(const FilterState& state, int frame, const Vector& y,
                        const LinearOperator& phi, const LinearOperator& W,
                        const DynamicsModel& dynamics, const Rwl1DfConfig& cfg,
                        const SolverSettings& solver) {
  cfg.validate();
  check_dims(y, phi, W);
  const Vector previous = previous_or_zero(state, W.cols());
  const Vector signal_prediction = dynamics.apply(W.forward(previous), frame);
  if (signal_prediction.size() != W.rows()) throw DimensionError("dynamics output length != W.rows");
  const Vector prediction = coefficient_prediction(signal_prediction, W);
  const LinearOperator B = compose(phi, W);
  const Vector initial =
      rwl1_df_weights(Vector::Zero(prediction.size()), prediction, cfg.tau, cfg.beta, cfg.eta);
  StepResult out = run_em(B, y, cfg.lambda0, initial, prediction, cfg.em_rel_tol, cfg.em_max_iters,
                          solver, state, [&](const Vector& z) {
                            return rwl1_df_weights(z, prediction, cfg.tau, cfg.beta, cfg.eta);
                          });
  out.state.previous_estimate = out.estimate;
  return out;
}

namespace {

KalmanStepResult kalman_update(KalmanState state, const Vector& y, const Matrix& phi) {
  const Index n = state.mean.size();
  if (phi.cols() != n || phi.rows() != y.size()) throw DimensionError("kalman: Phi size mismatch");
  if (state.measurement_noise.rows() != y.size() || state.measurement_noise.cols() != y.size()) {
    throw DimensionError("kalman: R size mismatch");
  }
  const Matrix pht = state.covariance * phi.transpose();
  const Matrix innovation_cov = phi * pht + state.measurement_noise;
  const Eigen::LLT<Matrix> llt(innovation_cov);
  if (llt.info() != Eigen::Success) throw NumericalError("kalman: innovation covariance is singular");
  const Matrix gain = llt.solve(pht.transpose()).transpose();
  state.mean += gain * (y - phi * state.mean);
  Matrix updated = (Matrix::Identity(n, n) - gain * phi) * state.covariance;
  state.covariance = 0.5 * (updated + updated.transpose());
  KalmanStepResult out;
  out.estimate = state.mean;
  out.state = std::move(state);
  return out;
}

}  // namespace

KalmanStepResult kalman_step(const KalmanState& state, const Vector& y, const Matrix& phi,
                             const Matrix& F) {
  const Index n = state.mean.size();
  if (F.rows() != n || F.cols() != n) throw DimensionError("kalman: F size mismatch");
  if (state.covariance.rows() != n || state.covariance.cols() != n ||
      state.process_noise.rows() != n || state.process_noise.cols() != n) {
    throw DimensionError("kalman: covariance size mismatch");
  }
  KalmanState predicted = state;
  predicted.mean = F * state.mean;
  predicted.covariance = F * state.covariance * F.transpose() + state.process_noise;
  return kalman_update(std::move(predicted), y, phi);
}

Vector oracle_ls_step(const Vector& y, const Matrix& phi, std::span<const Index> true_support) {
  if (y.size() != phi.rows()) throw DimensionError("oracle: measurement length != Phi.rows");
  const auto k = static_cast<Index>(true_support.size());
  if (k > phi.rows()) throw ArgumentError("oracle: support larger than the number of measurements");
  Vector out = Vector::Zero(phi.cols());
  if (k == 0) return out;
  Matrix sub(phi.rows(), k);
  for (Index j = 0; j < k; ++j) {
    const Index c = true_support[static_cast<std::size_t>(j)];
    if (c < 0 || c >= phi.cols()) throw DimensionError("oracle: support index out of range");
    sub.col(j) = phi.col(c);
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(sub);
  if (qr.rank() < k) throw NumericalError("oracle: restricted matrix is rank deficient");
  const Vector coef = qr.solve(y);
  for (Index j = 0; j < k; ++j) out[true_support[static_cast<std::size_t>(j)]] = coef[j];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const Vector& require_y(const FrameInput& f) {
  if (f.phi == nullptr || f.y == nullptr) throw ArgumentError("frame input needs phi and y");
  return *f.y;
}

class BpdnFilter final : public Filter {
 public:
  BpdnFilter(LinearOperator W, double gamma, SolverSettings s) : W_(std::move(W)), gamma_(gamma), s_(s) {}
  std::string_view id() const override { return "bpdn"; }
  FrameOutput step(const FrameInput& f) override {
    auto r = bpdn_step(state_, require_y(f), *f.phi, W_, gamma_, s_);
    return {W_.forward(r.estimate), std::move(r.diagnostics)};
  }
  void reset() override { state_ = {}; }

 private:
  LinearOperator W_;
  double gamma_;
  SolverSettings s_;
  FilterState state_;
};

class Rwl1Filter final : public Filter {
 public:
  Rwl1Filter(LinearOperator W, Rwl1Config cfg, SolverSettings s) : W_(std::move(W)), cfg_(cfg), s_(s) {
    cfg_.validate();
  }
  std::string_view id() const override { return "rwl1"; }
  FrameOutput step(const FrameInput& f) override {
    auto r = rwl1_step(state_, require_y(f), *f.phi, W_, cfg_, s_);
    return {W_.forward(r.estimate), std::move(r.diagnostics)};
  }
  void reset() override { state_ = {}; }

 private:
  LinearOperator W_;
  Rwl1Config cfg_;
  SolverSettings s_;
  FilterState state_;
};

class BpdnDfFilter final : public Filter {
 public:
  BpdnDfFilter(LinearOperator W, DynamicsModel d, double gamma, double kappa, SolverSettings s)
      : W_(std::move(W)), dynamics_(std::move(d)), gamma_(gamma), kappa_(kappa), s_(s) {
    if (!(kappa_ >= 0.0)) throw ArgumentError("kappa must be >= 0");
  }
  std::string_view id() const override { return "bpdn_df"; }
  FrameOutput step(const FrameInput& f) override {
    auto r = bpdn_df_step(state_, f.index, require_y(f), *f.phi, W_, dynamics_, gamma_, kappa_, s_);
    state_ = std::move(r.state);
    return {W_.forward(r.estimate), std::move(r.diagnostics)};
  }
  void reset() override { state_ = {}; }

 private:
  LinearOperator W_;
  DynamicsModel dynamics_;
  double gamma_;
  double kappa_;
  SolverSettings s_;
  FilterState state_;
};

class Rwl1DfFilter final : public Filter {
 public:
  Rwl1DfFilter(LinearOperator W, DynamicsModel d, Rwl1DfConfig cfg, SolverSettings s)
      : W_(std::move(W)), dynamics_(std::move(d)), cfg_(cfg), s_(s) {
    cfg_.validate();
  }
  std::string_view id() const override { return "rwl1_df"; }
  FrameOutput step(const FrameInput& f) override {
    auto r = rwl1_df_step(state_, f.index, require_y(f), *f.phi, W_, dynamics_, cfg_, s_);
    state_ = std::move(r.state);
    return {W_.forward(r.estimate), std::move(r.diagnostics)};
  }
  void reset() override { state_ = {}; }

 private:
  LinearOperator W_;
  DynamicsModel dynamics_;
  Rwl1DfConfig cfg_;
  SolverSettings s_;
  FilterState state_;
};

class KalmanFilter final : public Filter {
 public:
  KalmanFilter(Index n, DynamicsModel d, double process_var, double noise_var)
      : n_(n), dynamics_(std::move(d)), process_var_(process_var), noise_var_(noise_var) {
    if (!dynamics_.is_linear()) throw ArgumentError("Kalman filter needs linear dynamics");
    if (!(process_var >= 0.0 && noise_var >= 0.0)) throw ArgumentError("Kalman variances must be >= 0");
  }
  std::string_view id() const override { return "kalman"; }
  FrameOutput step(const FrameInput& f) override {
    const Vector& y = require_y(f);
    const Matrix phi = f.phi->to_dense();
    if (!state_) {
      // Frame 0: update the N(0, I) prior directly, no prediction.
      state_ = KalmanState{Vector::Zero(n_), Matrix::Identity(n_, n_), process_var_ * Matrix::Identity(n_, n_),
                           noise_var_ * Matrix::Identity(y.size(), y.size())};
      auto r = kalman_update(*state_, y, phi);
      state_ = std::move(r.state);
      return {std::move(r.estimate), {}};
    }
    auto r = kalman_step(*state_, y, phi, dynamics_.matrix(n_, f.index));
    state_ = std::move(r.state);
    return {std::move(r.estimate), {}};
  }
  void reset() override { state_.reset(); }

 private:
  Index n_;
  DynamicsModel dynamics_;
  double process_var_;
  double noise_var_;
  std::optional<KalmanState> state_;
};

class OracleFilter final : public Filter {
 public:
  std::string_view id() const override { return "oracle"; }
  FrameOutput step(const FrameInput& f) override {
    const Vector& y = require_y(f);
    const Vector est = f.phi->is_dense() ? oracle_ls_step(y, f.phi->matrix(), f.true_support)
                                         : oracle_ls_step(y, f.phi->to_dense(), f.true_support);
    return {est, {}};
  }
  void reset() override {}
};

}  // namespace

std::unique_ptr<Filter> make_bpdn_filter(LinearOperator W, double gamma, SolverSettings solver) {
  return std::make_unique<BpdnFilter>(std::move(W), gamma, solver);
}
std::unique_ptr<Filter> make_rwl1_filter(LinearOperator W, Rwl1Config cfg, SolverSettings solver) {
  return std::make_unique<Rwl1Filter>(std::move(W), cfg, solver);
}
std::unique_ptr<Filter> make_bpdn_df_filter(LinearOperator W, DynamicsModel dynamics, double gamma,
                                            double kappa, SolverSettings solver) {
  return std::make_unique<BpdnDfFilter>(std::move(W), std::move(dynamics), gamma, kappa, solver);
}
std::unique_ptr<Filter> make_rwl1_df_filter(LinearOperator W, DynamicsModel dynamics,
                                            Rwl1DfConfig cfg, SolverSettings solver) {
  return std::make_unique<Rwl1DfFilter>(std::move(W), std::move(dynamics), cfg, solver);
}
std::unique_ptr<Filter> make_kalman_filter(Index n, DynamicsModel dynamics, double process_var,
                                           double noise_var) {
  return std::make_unique<KalmanFilter>(n, std::move(dynamics), process_var, noise_var);
}
std::unique_ptr<Filter> make_oracle_filter() { return std::make_unique<OracleFilter>(); }

}  // namespace dynfilt
