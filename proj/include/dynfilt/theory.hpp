#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynfilt/dynamics.hpp"
#include "dynfilt/filters.hpp"
#include "dynfilt/operators.hpp"
#include "dynfilt/solvers.hpp"

namespace dynfilt {

// Parameters entering the BPDN-DF steady-state error bound.
struct TheoremInputs {
  double delta = 0.0;   // RIP constant of Phi W at sparsity S + 2q
  double kappa = 0.0;   // dynamics weight
  double gamma = 1.0;   // l1 weight
  double f_star = 1.0;  // Lipschitz constant of the dynamics
  int q = 0;
  double b = 1.0;        // bound on ||z_n||
  double eps_max = 0.0;  // bound on ||measurement noise||
  double nu_max = 0.0;   // bound on ||innovation||
  double e0 = 0.0;       // initial error ||e_0||
  void validate() const;
};

struct TheoremConstants {
  double beta = 0.0;  // contraction ratio of the transient term
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  bool contractive = false;           // beta < 1
  bool denominator_positive = false;  // 1 + kappa - delta - kappa f* > 0
  bool valid() const { return denominator_positive; }
};

TheoremConstants theorem_constants(const TheoremInputs& in);

// C1 sqrt(q) + C2 eps_max + C3 nu_max.
double steady_state_bound(const TheoremInputs& in, const TheoremConstants& c);

// beta^n ||e_0|| + (1 - beta^n)(C1 sqrt(q) + C2 eps_max + C3 nu_max).
// Throws StateError unless the constants are valid and contractive.
double error_bound_at(int n, const TheoremInputs& in, const TheoremConstants& c);

// Strict upper bound (1 - delta) / (f* - 1) on kappa when f* > 1; nullopt (no
// ceiling) when f* <= 1.
std::optional<double> kappa_admissible_max(double delta, double f_star);

struct IterateNormCheck {
  bool feasible = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

// The iterate-norm restriction on (b, eps_max, nu_max) versus gamma sqrt(q) for ISTA
// step size zeta (zeta_kappa = zeta / (1 + kappa)).
IterateNormCheck iterate_norm_feasible(const TheoremInputs& in, double step_size);

// The step size the bound's constants are derived with: 1 / (1 + delta).
inline double analysis_step_size(double delta) { return 1.0 / (1.0 + delta); }

// The parameter condition stated alongside the bound:
// kappa((1 - f*)b - (1+delta)gamma sqrt(q) - nu_max)
//   >= (1+delta)gamma sqrt(q) + sqrt(1+delta) eps_max - (1-delta)b.
struct ParameterCondition {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
};
ParameterCondition theorem_parameter_condition(const TheoremInputs& in);

struct RipEstimate {
  double delta = 0.0;
  double scale = 0.0;  // c in c(1 - delta)||z||^2 <= ||Az||^2 <= c(1 + delta)||z||^2
  double sigma_min_sq = 0.0;
  double sigma_max_sq = 0.0;
  std::uint64_t subsets = 0;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 2'000'000;

// Number of k-subsets of n items, saturating at UINT64_MAX.
std::uint64_t binomial(int n, int k);

// Exact RIP constant of Phi W over all k-column subsets, from the extreme squared
// singular values of every restricted submatrix; the scale c is fitted as their
// midpoint. Throws CapacityError when C(N', k) exceeds `cap`.
RipEstimate brute_force_rip(const Matrix& phi, const Matrix& W, int k,
                            std::uint64_t cap = kDefaultEnumerationCap, int workers = 1);

// ---------------------------------------------------------------------------
// End-to-end check of the bound on a small instance.

struct VerificationInstance {
  LinearOperator phi;  // fixed across frames; rescaled so the RIP scale c is 1
  LinearOperator W;
  DynamicsModel dynamics;
  Vector initial_state;                 // z_0, never measured; the filter starts from 0
  std::vector<Vector> coefficients;     // z_1..z_T
  std::vector<Vector> measurements;     // y_1..y_T
  std::vector<Vector> noise;            // eps_1..eps_T
  std::vector<Vector> innovations;      // nu_1..nu_T
  int sparsity = 0;
  RipEstimate rip;
};

struct VerificationInstanceConfig {
  int n = 24;  // N' (W = identity, so N = N')
  int m = 16;
  int sparsity = 2;
  int q = 2;  // RIP order is sparsity + 2q
  int frames = 30;
  double rho = 1.0;  // dynamics f(x) = rho x, f* = |rho|
  double noise_std = 0.0;
  double innovation_std = 0.0;  // Gaussian perturbation of the active amplitudes
  double amplitude = 1.0;
  std::uint64_t seed = 0;
  int rip_workers = 1;
};

// Draws Phi (normalized by the fitted RIP scale), an S-sparse initial state with
// fixed support, and a trajectory z_n = rho z_{n-1} + nu_n.
VerificationInstance make_verification_instance(const VerificationInstanceConfig& cfg);

struct BpdnDfSettings {
  double gamma = 1.0;
  double kappa = 0.5;
  SolverSettings solver{20000, 1e-10};
  ThresholdRule threshold_rule = ThresholdRule::kProximal;
};

struct FrameBoundCheck {
  int frame = 0;
  double empirical_error = 0.0;
  double bound = 0.0;
  double margin = 0.0;
};

struct VerificationReport {
  TheoremInputs inputs;
  TheoremConstants constants;
  IterateNormCheck iterate_norm;
  ParameterCondition parameter_condition;
  std::optional<double> kappa_max;
  double step_size = 0.0;
  bool conditions_met = false;
  std::vector<std::string> unmet;  // human-readable reasons when conditions_met is false
  bool bound_holds = false;        // only meaningful when conditions_met
  double min_margin = 0.0;
  double max_error_over_b = 0.0;   // a-posteriori check that ||e_n|| <= b
  std::vector<FrameBoundCheck> frames;
};

// Fills TheoremInputs from the instance (delta from the brute-forced RIP, b = 2 max ||z_n||,
// eps/nu maxima from the realized sequences, e0 = ||z_0||), runs BPDN-DF, and compares the
// per-frame error with the bound. Assumption violations mark the report "conditions unmet"
// and skip the assertion.
VerificationReport verify_bound_empirically(const VerificationInstance& instance,
                                            const BpdnDfSettings& settings);

nlohmann::json report_to_json(const VerificationReport& report);

}  // namespace dynfilt
