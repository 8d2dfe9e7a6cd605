#include "dynfilt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "dynfilt/errors.hpp"

namespace dynfilt {

double rmse(const Vector& truth, const Vector& estimate) {
  if (truth.size() != estimate.size()) throw DimensionError("rmse: length mismatch");
  const double denom = truth.squaredNorm();
  if (denom == 0.0) throw UndefinedMetricError("rmse: truth has zero norm");
  return (truth - estimate).squaredNorm() / denom;
}

double steady_state_mean(const std::vector<double>& series, int burn_in) {
  if (burn_in < 0) throw ArgumentError("burn_in must be >= 0");
  if (static_cast<std::size_t>(burn_in) >= series.size()) {
    throw ArgumentError("steady_state_mean: burn-in (" + std::to_string(burn_in) +
                        ") leaves no frames of " + std::to_string(series.size()));
  }
  const auto first = series.begin() + burn_in;
  return std::accumulate(first, series.end(), 0.0) / static_cast<double>(series.end() - first);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ArgumentError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw ArgumentError("percentile q must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

ImprovementStats improvement_stats(const std::vector<std::vector<double>>& reference,
                                   const std::vector<std::vector<double>>& baseline) {
  if (reference.size() != baseline.size()) throw DimensionError("improvement_stats: trial count mismatch");
  std::vector<double> diffs;
  std::vector<double> base;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    if (reference[t].size() != baseline[t].size()) {
      throw DimensionError("improvement_stats: frame count mismatch in trial " + std::to_string(t));
    }
    for (std::size_t f = 0; f < reference[t].size(); ++f) {
      diffs.push_back(baseline[t][f] - reference[t][f]);
      base.push_back(baseline[t][f]);
    }
  }
  if (diffs.empty()) throw ArgumentError("improvement_stats: no frames");
  const double base_mean = std::accumulate(base.begin(), base.end(), 0.0) / static_cast<double>(base.size());
  const double base_median = median(base);
  if (base_mean == 0.0 || base_median == 0.0) {
    throw UndefinedMetricError("improvement_stats: baseline mean or median is zero");
  }
  ImprovementStats out;
  out.mean_pct = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size()) /
                 base_mean * 100.0;
  out.median_pct = median(diffs) / base_median * 100.0;
  return out;
}

std::map<std::string, AlgorithmSummary> summarize(const std::vector<TrialResult>& results, int bins,
                                                  int burn_in) {
  if (bins < 1) throw ArgumentError("summarize: bins must be >= 1");
  std::map<std::string, std::vector<const TrialResult*>> grouped;
  for (const auto& r : results) grouped[r.algorithm_id].push_back(&r);

  std::map<std::string, AlgorithmSummary> out;
  for (const auto& [id, trials] : grouped) {
    std::vector<double> values;
    std::vector<double> em;
    double steady = 0.0;
    std::size_t steady_count = 0;
    for (const TrialResult* t : trials) {
      values.insert(values.end(), t->per_frame_rmse.begin(), t->per_frame_rmse.end());
      for (int e : t->em_iterations) em.push_back(e);
      if (t->per_frame_rmse.size() > static_cast<std::size_t>(burn_in)) {
        steady += steady_state_mean(t->per_frame_rmse, burn_in);
        ++steady_count;
      }
    }
    if (values.empty()) continue;
    AlgorithmSummary s;
    s.count = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.median = median(values);
    s.p25 = percentile(values, 25.0);
    s.p75 = percentile(values, 75.0);
    s.steady_state_mean = steady_count > 0 ? steady / static_cast<double>(steady_count)
                                           : std::numeric_limits<double>::quiet_NaN();
    s.median_em_iterations = em.empty() ? 0.0 : median(em);

    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    s.histogram.lo = *lo_it;
    s.histogram.hi = *hi_it;
    s.histogram.counts.assign(static_cast<std::size_t>(bins), 0);
    const double width = (s.histogram.hi - s.histogram.lo) / bins;
    for (double v : values) {
      auto b = width > 0.0 ? static_cast<std::size_t>((v - s.histogram.lo) / width) : 0;
      b = std::min(b, static_cast<std::size_t>(bins - 1));
      ++s.histogram.counts[b];
    }
    out.emplace(id, std::move(s));
  }
  return out;
}

void write_trial_csv(std::ostream& os, const std::vector<TrialResult>& results, bool header) {
  if (header) os << "trial,seed,frame,algorithm,rmse,em_iters,solver_iters\n";
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17);
  for (const auto& r : results) {
    for (std::size_t f = 0; f < r.per_frame_rmse.size(); ++f) {
      os << r.trial_index << ',' << r.seed << ',' << f << ',' << r.algorithm_id << ','
         << r.per_frame_rmse[f] << ',' << (f < r.em_iterations.size() ? r.em_iterations[f] : 0) << ','
         << (f < r.solver_iterations.size() ? r.solver_iterations[f] : 0) << '\n';
    }
  }
  os.flags(flags);
  os.precision(precision);
}

nlohmann::json summary_to_json(const std::map<std::string, AlgorithmSummary>& summary) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [id, s] : summary) {
    out[id] = {{"count", s.count},
               {"mean", s.mean},
               {"median", s.median},
               {"p25", s.p25},
               {"p75", s.p75},
               {"steady_state_mean", s.steady_state_mean},
               {"median_em_iterations", s.median_em_iterations},
               {"histogram", {{"lo", s.histogram.lo}, {"hi", s.histogram.hi}, {"counts", s.histogram.counts}}}};
  }
  return out;
}

}  // namespace dynfilt
