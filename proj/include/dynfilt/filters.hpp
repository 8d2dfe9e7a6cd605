#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dynfilt/dynamics.hpp"
#include "dynfilt/operators.hpp"
#include "dynfilt/solvers.hpp"

namespace dynfilt {

// Reweighted-l1 settings for independent RWL1: weights beta / (|z| + eta).
struct Rwl1Config {
  double lambda0 = 0.0011;
  double beta = 2.0;
  double eta = 0.01;
  double em_rel_tol = 1e-3;
  int em_max_iters = 25;
  void validate() const;
};

// RWL1-DF settings: weights 2 tau / (beta |z| + |prediction| + eta).
struct Rwl1DfConfig {
  double lambda0 = 0.0011;
  double tau = 1.0;
  double beta = 1.0;
  double eta = 0.975;
  double em_rel_tol = 1e-3;
  int em_max_iters = 25;
  void validate() const;
};

struct KalmanState {
  Vector mean;
  Matrix covariance;
  Matrix process_noise;
  Matrix measurement_noise;
};

struct StepDiagnostics {
  int em_iterations = 0;      // weighted-BPDN solves in the EM loop (0 for non-EM filters)
  int solver_iterations = 0;  // ISTA iterations summed over all solves
  bool em_converged = true;
  bool solver_converged = true;
  // Relative squared coefficient change after each EM iteration past the first.
  std::vector<double> em_changes;
};

struct FilterState {
  Vector previous_estimate;  // coefficients z_{n-1}; empty before the first frame
  std::optional<KalmanState> kalman;
  Vector last_weights;
};

struct StepResult {
  Vector estimate;  // coefficients z_n
  FilterState state;
  StepDiagnostics diagnostics;
};

// Settings shared by every solver call a filter makes (warm starts are managed by the filters).
struct SolverSettings {
  int max_iters = 5000;
  double rel_tol = 1e-6;
};

// Independent BPDN: uniform-weight l1 solve, no temporal coupling, cold start.
StepResult bpdn_step(const FilterState& state, const Vector& y, const LinearOperator& phi,
                     const LinearOperator& W, double gamma, const SolverSettings& solver = {});

// Independent reweighted l1, starting from uniform unit weights.
StepResult rwl1_step(const FilterState& state, const Vector& y, const LinearOperator& phi,
                     const LinearOperator& W, const Rwl1Config& cfg,
                     const SolverSettings& solver = {});

// BPDN with a quadratic pull toward the dynamics prediction f(W z_{n-1}, n).
StepResult bpdn_df_step(const FilterState& state, int frame, const Vector& y,
                        const LinearOperator& phi, const LinearOperator& W,
                        const DynamicsModel& dynamics, double gamma, double kappa,
                        const SolverSettings& solver = {});

// Reweighted l1 whose weights are informed by the propagated previous estimate.
StepResult rwl1_df_step(const FilterState& state, int frame, const Vector& y,
                        const LinearOperator& phi, const LinearOperator& W,
                        const DynamicsModel& dynamics, const Rwl1DfConfig& cfg,
                        const SolverSettings& solver = {});

// RWL1 weight update beta / (|z| + eta).
Vector rwl1_weights(const Vector& z, double beta, double eta);
// RWL1-DF E-step 2 tau / (beta |z| + |prediction| + eta).
Vector rwl1_df_weights(const Vector& z, const Vector& prediction, double tau, double beta, double eta);

struct KalmanStepResult {
  Vector estimate;
  KalmanState state;
};

// One predict/update cycle with dynamics matrix F and measurement matrix phi.
KalmanStepResult kalman_step(const KalmanState& state, const Vector& y, const Matrix& phi,
                             const Matrix& F);

// Least squares restricted to the known support; zeros elsewhere.
Vector oracle_ls_step(const Vector& y, const Matrix& phi, std::span<const Index> true_support);

// ---------------------------------------------------------------------------
// Streaming interface used by the experiment runner.

struct FrameInput {
  int index = 0;
  const LinearOperator* phi = nullptr;
  const Vector* y = nullptr;
  std::span<const Index> true_support;  // only consulted by the oracle
};

struct FrameOutput {
  Vector signal;  // W z_n
  StepDiagnostics diagnostics;
};

class Filter {
 public:
  virtual ~Filter() = default;
  virtual std::string_view id() const = 0;
  virtual FrameOutput step(const FrameInput& frame) = 0;
  virtual void reset() = 0;
};

std::unique_ptr<Filter> make_bpdn_filter(LinearOperator W, double gamma, SolverSettings solver = {});
std::unique_ptr<Filter> make_rwl1_filter(LinearOperator W, Rwl1Config cfg, SolverSettings solver = {});
std::unique_ptr<Filter> make_bpdn_df_filter(LinearOperator W, DynamicsModel dynamics, double gamma,
                                            double kappa, SolverSettings solver = {});
std::unique_ptr<Filter> make_rwl1_df_filter(LinearOperator W, DynamicsModel dynamics,
                                            Rwl1DfConfig cfg, SolverSettings solver = {});
// Signal-domain Kalman filter with Q = process_var I, R = noise_var I, P_0 = I, mean_0 = 0.
std::unique_ptr<Filter> make_kalman_filter(Index n, DynamicsModel dynamics, double process_var,
                                           double noise_var);
std::unique_ptr<Filter> make_oracle_filter();

}  // namespace dynfilt
