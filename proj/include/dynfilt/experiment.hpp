#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynfilt/filters.hpp"
#include "dynfilt/metrics.hpp"
#include "dynfilt/simulation.hpp"
#include "dynfilt/theory.hpp"

namespace dynfilt {

// One filter in an experiment. Parameters not present in `params` take their
// scenario-dependent defaults (see resolve_params).
struct AlgorithmSpec {
  std::string id;
  nlohmann::json params = nlohmann::json::object();
};

struct SweepSpec {
  std::string parameter;  // "M", "p", "2Sp", "S", "sigma2" or "T"
  std::vector<double> values;
};

struct ExperimentSpec {
  ScenarioConfig scenario;
  std::vector<AlgorithmSpec> algorithms;
  int num_trials = 40;
  std::optional<SweepSpec> sweep;
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  SolverSettings solver;
  int burn_in = kDefaultBurnIn;
  bool fixed_operator = false;  // one Phi for the whole trial instead of one per frame

  // Throws ArgumentError / CapacityError.
  void validate() const;
};

// Ids accepted in ExperimentSpec::algorithms.
const std::vector<std::string>& algorithm_ids();

// Fills in defaults that depend on the scenario: gamma = 0.55 sigma2 (bpdn),
// gamma = 0.5 sigma2 and kappa = 0.0007 / (p + 1) (bpdn_df), eta = 1 - 2p/S (rwl1_df).
nlohmann::json resolve_params(const AlgorithmSpec& algorithm, const ScenarioConfig& scenario);

std::unique_ptr<Filter> make_filter(const AlgorithmSpec& algorithm, const ScenarioConfig& scenario,
                                    const DynamicsModel& dynamics, const SolverSettings& solver);

const std::vector<std::string>& preset_names();
// Throws ArgumentError for an unknown name.
ExperimentSpec preset(std::string_view name);

void to_json(nlohmann::json& j, const ExperimentSpec& spec);
// Missing keys keep their ExperimentSpec defaults; unknown keys throw ArgumentError.
ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec base = {});

// Seed of the scenario and measurements for a trial.
std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index);

// One scenario, one measurement sequence, every configured filter. Results follow
// the order of spec.algorithms.
std::vector<TrialResult> run_trial(const ExperimentSpec& spec, int trial_index);

// Trials 0..num_trials-1 on `workers` threads, returned in trial order.
// `progress` (optional) is called from worker threads after each finished trial.
using ProgressFn = std::function<void(int done, int total)>;
std::vector<TrialResult> run_trials(const ExperimentSpec& spec, int workers = 1,
                                    const ProgressFn& progress = {});

// Copy of `spec` with the swept parameter set to `value`.
ExperimentSpec apply_sweep_value(const ExperimentSpec& spec, const std::string& parameter, double value);

struct SweepPoint {
  double value = 0.0;
  std::map<std::string, double> steady_state_mean;  // per algorithm, averaged over trials
  std::vector<TrialResult> trials;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepPoint> points;
};

// Throws ArgumentError when the spec has no sweep or an empty value list.
SweepResult run_sweep(const ExperimentSpec& spec, int workers = 1, const ProgressFn& progress = {});

nlohmann::json sweep_to_json(const SweepResult& sweep);

// Per-frame EM iteration counts of the EM-based filters, one row per (trial, frame).
struct ConvergenceProfile {
  std::vector<std::string> algorithms;
  std::vector<TrialResult> trials;
  std::map<std::string, double> median_em_iterations;
  std::map<std::string, double> max_em_iterations;
};
ConvergenceProfile run_convergence(const ExperimentSpec& spec, int workers = 1,
                                   const ProgressFn& progress = {});
nlohmann::json convergence_to_json(const ConvergenceProfile& profile);

// Settings of the small-instance bound check driven by `verify-theorem`.
struct TheoremExperiment {
  VerificationInstanceConfig instance;
  BpdnDfSettings filter;
  int num_instances = 10;
  std::uint64_t master_seed = 0;
};

TheoremExperiment theorem_preset(std::string_view name);
const std::vector<std::string>& theorem_preset_names();
TheoremExperiment theorem_experiment_from_json(const nlohmann::json& j, TheoremExperiment base = {});
void to_json(nlohmann::json& j, const TheoremExperiment& t);

struct TheoremRun {
  std::vector<VerificationReport> reports;
  int conditions_met = 0;
  int bound_holds = 0;
};

TheoremRun run_theorem_experiment(const TheoremExperiment& t, int workers = 1);
nlohmann::json theorem_run_to_json(const TheoremExperiment& t, const TheoremRun& run);

}  // namespace dynfilt
