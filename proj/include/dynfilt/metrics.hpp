#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynfilt/operators.hpp"

namespace dynfilt {

// ||truth - estimate||^2 / ||truth||^2 with the per-frame truth norm as normalizer.
// Throws UndefinedMetricError for an all-zero truth.
double rmse(const Vector& truth, const Vector& estimate);

inline constexpr int kDefaultBurnIn = 20;

// Mean of series[burn_in:]. Throws ArgumentError when nothing is left after burn-in.
double steady_state_mean(const std::vector<double>& series, int burn_in = kDefaultBurnIn);

struct ImprovementStats {
  double mean_pct = 0.0;
  double median_pct = 0.0;
};

// Percent improvement of `reference` over `baseline`: per-frame differences
// (baseline - reference) summarized by mean (median) and normalized by the mean
// (median) of the baseline, times 100. Sequences are flattened frame by frame.
ImprovementStats improvement_stats(const std::vector<std::vector<double>>& reference,
                                   const std::vector<std::vector<double>>& baseline);

struct TrialResult {
  std::string algorithm_id;
  std::uint64_t seed = 0;
  int trial_index = 0;
  std::vector<double> per_frame_rmse;
  std::vector<int> em_iterations;
  std::vector<int> solver_iterations;
  nlohmann::json config;  // snapshot of the settings that produced this trial
};

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

struct AlgorithmSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double steady_state_mean = 0.0;  // mean over trials of the per-trial steady-state means
  double median_em_iterations = 0.0;
  Histogram histogram;
};

// Per-algorithm statistics over every per-frame rMSE value in `results`.
std::map<std::string, AlgorithmSummary> summarize(const std::vector<TrialResult>& results,
                                                  int bins = 50, int burn_in = kDefaultBurnIn);

// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

// CSV with header trial,seed,frame,algorithm,rmse,em_iters,solver_iters.
void write_trial_csv(std::ostream& os, const std::vector<TrialResult>& results, bool header = true);

nlohmann::json summary_to_json(const std::map<std::string, AlgorithmSummary>& summary);

}  // namespace dynfilt
