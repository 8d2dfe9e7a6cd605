#include "dynfilt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "dynfilt/errors.hpp"
#include "dynfilt/rng.hpp"

namespace dynfilt {

namespace {

const std::vector<std::string> kAlgorithmIds{"bpdn", "rwl1", "bpdn_df", "rwl1_df", "kalman", "oracle"};
const std::vector<std::string> kPresetNames{"fig3a", "fig3b-sweep", "fig3c-sweep"};
const std::vector<std::string> kTheoremPresets{"small", "kappa-above-ceiling", "static"};

const std::map<std::string, std::set<std::string>>& allowed_params() {
  static const std::map<std::string, std::set<std::string>> table{
      {"bpdn", {"gamma"}},
      {"rwl1", {"lambda0", "beta", "eta", "em_rel_tol", "em_max_iters"}},
      {"bpdn_df", {"gamma", "kappa"}},
      {"rwl1_df", {"lambda0", "tau", "beta", "eta", "em_rel_tol", "em_max_iters"}},
      {"kalman", {"process_var"}},
      {"oracle", {}},
  };
  return table;
}

bool is_em_algorithm(const std::string& id) { return id == "rwl1" || id == "rwl1_df"; }

// Rethrows the active exception with `context` prepended, keeping its type.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const DimensionError& e) {
    throw DimensionError(context + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(context + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + e.what());
  } catch (const CapacityError& e) {
    throw CapacityError(context + e.what());
  } catch (const UndefinedMetricError& e) {
    throw UndefinedMetricError(context + e.what());
  } catch (const StateError& e) {
    throw StateError(context + e.what());
  }
}

// Runs job(i) for i in [0, count) on a pool; the first failure by index is rethrown.
template <typename Job>
void parallel_for(int count, int workers, const Job& job, const ProgressFn& progress) {
  workers = std::clamp(workers, 1, std::max(1, count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
      const int finished = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(finished, count);
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ArgumentError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ArgumentError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

const std::vector<std::string>& algorithm_ids() { return kAlgorithmIds; }
const std::vector<std::string>& preset_names() { return kPresetNames; }
const std::vector<std::string>& theorem_preset_names() { return kTheoremPresets; }

void ExperimentSpec::validate() const {
  scenario.validate();
  if (algorithms.empty()) throw ArgumentError("experiment needs at least one algorithm");
  std::set<std::string> seen;
  for (const auto& a : algorithms) {
    const auto it = allowed_params().find(a.id);
    if (it == allowed_params().end()) throw ArgumentError("unknown algorithm id '" + a.id + "'");
    if (!seen.insert(a.id).second) throw ArgumentError("algorithm '" + a.id + "' listed twice");
    if (!a.params.is_null()) check_keys(a.params, it->second, "parameters of '" + a.id + "'");
  }
  if (num_trials < 1) throw ArgumentError("num_trials must be >= 1");
  if (burn_in < 0 || burn_in >= scenario.num_frames) {
    throw ArgumentError("burn_in must lie in [0, T); got " + std::to_string(burn_in));
  }
  if (solver.max_iters < 1 || !(solver.rel_tol >= 0.0)) throw ArgumentError("invalid solver settings");
  if (sweep) {
    if (sweep->values.empty()) throw ArgumentError("sweep over '" + sweep->parameter + "' has no values");
    for (double v : sweep->values) {
      const ExperimentSpec point = apply_sweep_value(*this, sweep->parameter, v);
      point.scenario.validate();
      if (burn_in >= point.scenario.num_frames) throw ArgumentError("burn_in must be < T at every sweep value");
    }
  }
}

nlohmann::json resolve_params(const AlgorithmSpec& algorithm, const ScenarioConfig& sc) {
  nlohmann::json p = nlohmann::json::object();
  const double sigma2 = sc.noise_var;
  const double prob = sc.change_prob;
  if (algorithm.id == "bpdn") {
    p["gamma"] = 0.55 * sigma2;
  } else if (algorithm.id == "rwl1") {
    const Rwl1Config d;
    p = {{"lambda0", d.lambda0}, {"beta", d.beta}, {"eta", d.eta},
         {"em_rel_tol", d.em_rel_tol}, {"em_max_iters", d.em_max_iters}};
  } else if (algorithm.id == "bpdn_df") {
    p = {{"gamma", 0.5 * sigma2}, {"kappa", 0.0007 / (prob + 1.0)}};
  } else if (algorithm.id == "rwl1_df") {
    const Rwl1DfConfig d;
    p = {{"lambda0", d.lambda0}, {"tau", d.tau}, {"beta", d.beta},
         {"eta", 1.0 - 2.0 * prob / static_cast<double>(sc.num_targets)},
         {"em_rel_tol", d.em_rel_tol}, {"em_max_iters", d.em_max_iters}};
  } else if (algorithm.id == "kalman") {
    p["process_var"] = 0.01;
  } else if (algorithm.id != "oracle") {
    throw ArgumentError("unknown algorithm id '" + algorithm.id + "'");
  }
  for (const auto& [key, value] : algorithm.params.items()) p[key] = value;
  return p;
}

std::unique_ptr<Filter> make_filter(const AlgorithmSpec& algorithm, const ScenarioConfig& sc,
                                    const DynamicsModel& dynamics, const SolverSettings& solver) {
  const nlohmann::json p = resolve_params(algorithm, sc);
  const Index n = sc.dimension();
  const auto W = LinearOperator::identity(n);
  if (algorithm.id == "bpdn") return make_bpdn_filter(W, p.at("gamma").get<double>(), solver);
  if (algorithm.id == "rwl1") {
    Rwl1Config c;
    c.lambda0 = p.at("lambda0");
    c.beta = p.at("beta");
    c.eta = p.at("eta");
    c.em_rel_tol = p.at("em_rel_tol");
    c.em_max_iters = p.at("em_max_iters");
    return make_rwl1_filter(W, c, solver);
  }
  if (algorithm.id == "bpdn_df") {
    return make_bpdn_df_filter(W, dynamics, p.at("gamma").get<double>(), p.at("kappa").get<double>(), solver);
  }
  if (algorithm.id == "rwl1_df") {
    Rwl1DfConfig c;
    c.lambda0 = p.at("lambda0");
    c.tau = p.at("tau");
    c.beta = p.at("beta");
    c.eta = p.at("eta");
    c.em_rel_tol = p.at("em_rel_tol");
    c.em_max_iters = p.at("em_max_iters");
    return make_rwl1_df_filter(W, dynamics, c, solver);
  }
  if (algorithm.id == "kalman") {
    return make_kalman_filter(n, dynamics, p.at("process_var").get<double>(), sc.noise_var);
  }
  return make_oracle_filter();
}

ExperimentSpec preset(std::string_view name) {
  ExperimentSpec spec;
  spec.algorithms = {{"bpdn", {}}, {"rwl1", {}}, {"bpdn_df", {}}, {"rwl1_df", {}}, {"oracle", {}}};
  if (name == "fig3a") return spec;
  if (name == "fig3b-sweep") {
    spec.sweep = SweepSpec{"M", {70, 90, 110, 130, 150}};
    return spec;
  }
  if (name == "fig3c-sweep") {
    spec.scenario.num_measurements = 70;
    spec.sweep = SweepSpec{"2Sp", {2, 4, 6, 8, 10}};
    return spec;
  }
  std::string known;
  for (const auto& p : kPresetNames) known += (known.empty() ? "" : ", ") + p;
  throw ArgumentError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

void to_json(nlohmann::json& j, const ExperimentSpec& spec) {
  nlohmann::json algorithms = nlohmann::json::array();
  for (const auto& a : spec.algorithms) {
    algorithms.push_back({{"id", a.id}, {"params", resolve_params(a, spec.scenario)}});
  }
  j = {{"scenario", spec.scenario},
       {"algorithms", std::move(algorithms)},
       {"trials", spec.num_trials},
       {"seed", spec.master_seed},
       {"output_dir", spec.output_dir},
       {"solver", {{"max_iters", spec.solver.max_iters}, {"rel_tol", spec.solver.rel_tol}}},
       {"burn_in", spec.burn_in},
       {"fixed_operator", spec.fixed_operator}};
  j["scenario"]["N"] = spec.scenario.dimension();
  j["scenario"].erase("seed");
  if (spec.sweep) j["sweep"] = {{"parameter", spec.sweep->parameter}, {"values", spec.sweep->values}};
}

ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec spec) {
  check_keys(j, {"preset", "scenario", "algorithms", "trials", "seed", "output_dir", "solver", "burn_in",
                 "fixed_operator", "sweep"},
             "experiment config");
  if (j.contains("preset")) spec = preset(j.at("preset").get<std::string>());
  try {
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      check_keys(s, {"grid_side", "N", "S", "p", "T", "M", "sigma2", "amplitude_range"}, "scenario");
      from_json(s, spec.scenario);
      if (s.contains("N")) {
        const int n = s.at("N").get<int>();
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(n, 0)))));
        if (side * side != n) throw ArgumentError("scenario N must be a perfect square (N = grid_side^2)");
        if (s.contains("grid_side") && s.at("grid_side").get<int>() != side) {
          throw ArgumentError("scenario N and grid_side disagree");
        }
        spec.scenario.grid_side = side;
      }
    }
    if (j.contains("algorithms")) {
      spec.algorithms.clear();
      for (const auto& a : j.at("algorithms")) {
        if (a.is_string()) {
          spec.algorithms.push_back({a.get<std::string>(), nlohmann::json::object()});
        } else {
          check_keys(a, {"id", "params"}, "algorithm entry");
          spec.algorithms.push_back({a.at("id").get<std::string>(), a.value("params", nlohmann::json::object())});
        }
      }
    }
    read_if(j, "trials", spec.num_trials);
    read_if(j, "seed", spec.master_seed);
    read_if(j, "output_dir", spec.output_dir);
    read_if(j, "burn_in", spec.burn_in);
    read_if(j, "fixed_operator", spec.fixed_operator);
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      check_keys(s, {"max_iters", "rel_tol"}, "solver");
      read_if(s, "max_iters", spec.solver.max_iters);
      read_if(s, "rel_tol", spec.solver.rel_tol);
    }
    if (j.contains("sweep")) {
      if (j.at("sweep").is_null()) {
        spec.sweep.reset();
      } else {
        const auto& s = j.at("sweep");
        check_keys(s, {"parameter", "values"}, "sweep");
        spec.sweep = SweepSpec{s.at("parameter").get<std::string>(), s.at("values").get<std::vector<double>>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("experiment config: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(trial_index));
}

std::vector<TrialResult> run_trial(const ExperimentSpec& spec, int trial_index) {
  const std::string where = "trial " + std::to_string(trial_index) + ": ";
  ScenarioConfig sc = spec.scenario;
  sc.seed = trial_seed(spec.master_seed, trial_index);

  TrackingScenario scenario;
  std::vector<MeasuredFrame> frames;
  try {
    scenario = generate_scenario(sc);
    Rng rng(derive_seed(sc.seed, kMeasurementStream));
    frames = measure_scenario(scenario, sc.num_measurements, sc.noise_var, rng, spec.fixed_operator);
  } catch (...) {
    rethrow_with_context(where);
  }
  const DynamicsModel dynamics = scenario.dynamics();

  nlohmann::json snapshot;
  to_json(snapshot, spec);
  snapshot.erase("sweep");
  snapshot["scenario"]["seed"] = sc.seed;

  std::vector<TrialResult> results;
  for (const auto& algorithm : spec.algorithms) {
    TrialResult r;
    r.algorithm_id = algorithm.id;
    r.seed = sc.seed;
    r.trial_index = trial_index;
    r.config = snapshot;
    r.config["algorithm"] = {{"id", algorithm.id}, {"params", resolve_params(algorithm, sc)}};
    std::unique_ptr<Filter> filter;
    try {
      filter = make_filter(algorithm, sc, dynamics, spec.solver);
    } catch (...) {
      rethrow_with_context(where + algorithm.id + ": ");
    }
    for (int f = 0; f < scenario.num_frames(); ++f) {
      const auto fi = static_cast<std::size_t>(f);
      FrameInput input{f, &frames[fi].phi, &frames[fi].y, scenario.supports[fi]};
      try {
        FrameOutput out = filter->step(input);
        r.per_frame_rmse.push_back(rmse(scenario.states[fi], out.signal));
        r.em_iterations.push_back(out.diagnostics.em_iterations);
        r.solver_iterations.push_back(out.diagnostics.solver_iterations);
      } catch (...) {
        rethrow_with_context(where + algorithm.id + ", frame " + std::to_string(f) + ": ");
      }
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<TrialResult> run_trials(const ExperimentSpec& spec, int workers, const ProgressFn& progress) {
  spec.validate();
  std::vector<std::vector<TrialResult>> per_trial(static_cast<std::size_t>(spec.num_trials));
  parallel_for(
      spec.num_trials, workers,
      [&](int t) { per_trial[static_cast<std::size_t>(t)] = run_trial(spec, t); }, progress);
  std::vector<TrialResult> out;
  for (auto& trial : per_trial) {
    for (auto& r : trial) out.push_back(std::move(r));
  }
  return out;
}

ExperimentSpec apply_sweep_value(const ExperimentSpec& spec, const std::string& parameter, double value) {
  ExperimentSpec out = spec;
  out.sweep.reset();
  auto as_int = [&](double v) {
    if (v != std::floor(v)) throw ArgumentError("sweep value " + std::to_string(v) + " for '" + parameter +
                                                "' must be an integer");
    return static_cast<int>(v);
  };
  ScenarioConfig& sc = out.scenario;
  if (parameter == "M") {
    sc.num_measurements = as_int(value);
  } else if (parameter == "p") {
    sc.change_prob = value;
  } else if (parameter == "2Sp") {
    sc.change_prob = value / (2.0 * sc.num_targets);
  } else if (parameter == "S") {
    sc.num_targets = as_int(value);
  } else if (parameter == "sigma2") {
    sc.noise_var = value;
  } else if (parameter == "T") {
    sc.num_frames = as_int(value);
  } else {
    throw ArgumentError("cannot sweep '" + parameter + "' (supported: M, p, 2Sp, S, sigma2, T)");
  }
  return out;
}

SweepResult run_sweep(const ExperimentSpec& spec, int workers, const ProgressFn& progress) {
  if (!spec.sweep) throw ArgumentError("run_sweep: the experiment has no sweep");
  if (spec.sweep->values.empty()) throw ArgumentError("run_sweep: the sweep value list is empty");
  spec.validate();
  SweepResult out;
  out.parameter = spec.sweep->parameter;
  const int total = static_cast<int>(spec.sweep->values.size()) * spec.num_trials;
  int offset = 0;
  for (double v : spec.sweep->values) {
    const ExperimentSpec point_spec = apply_sweep_value(spec, out.parameter, v);
    SweepPoint point;
    point.value = v;
    ProgressFn inner;
    if (progress) inner = [&](int done, int) { progress(offset + done, total); };
    point.trials = run_trials(point_spec, workers, inner);
    offset += spec.num_trials;
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : point.trials) {
      auto& [sum, n] = acc[r.algorithm_id];
      sum += steady_state_mean(r.per_frame_rmse, spec.burn_in);
      ++n;
    }
    for (const auto& [id, sn] : acc) point.steady_state_mean[id] = sn.first / sn.second;
    out.points.push_back(std::move(point));
  }
  return out;
}

nlohmann::json sweep_to_json(const SweepResult& sweep) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : sweep.points) {
    points.push_back({{"value", p.value}, {"steady_state_mean", p.steady_state_mean},
                      {"summary", summary_to_json(summarize(p.trials))}});
  }
  return {{"parameter", sweep.parameter}, {"points", std::move(points)}};
}

ConvergenceProfile run_convergence(const ExperimentSpec& spec, int workers, const ProgressFn& progress) {
  ExperimentSpec em_spec = spec;
  em_spec.sweep.reset();
  em_spec.algorithms.clear();
  for (const auto& a : spec.algorithms) {
    if (is_em_algorithm(a.id)) em_spec.algorithms.push_back(a);
  }
  if (em_spec.algorithms.empty()) throw ArgumentError("convergence profiling needs rwl1 or rwl1_df");
  ConvergenceProfile out;
  for (const auto& a : em_spec.algorithms) out.algorithms.push_back(a.id);
  out.trials = run_trials(em_spec, workers, progress);
  std::map<std::string, std::vector<double>> counts;
  for (const auto& r : out.trials) {
    for (int e : r.em_iterations) counts[r.algorithm_id].push_back(e);
  }
  for (const auto& [id, c] : counts) {
    out.median_em_iterations[id] = median(c);
    out.max_em_iterations[id] = *std::max_element(c.begin(), c.end());
  }
  return out;
}

nlohmann::json convergence_to_json(const ConvergenceProfile& p) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& r : p.trials) {
    auto& h = hist[r.algorithm_id];
    if (h.is_null()) h = nlohmann::json::object();
    for (int e : r.em_iterations) {
      const std::string key = std::to_string(e);
      h[key] = h.value(key, 0) + 1;
    }
  }
  return {{"algorithms", p.algorithms},
          {"median_em_iterations", p.median_em_iterations},
          {"max_em_iterations", p.max_em_iterations},
          {"em_iteration_counts", std::move(hist)}};
}

TheoremExperiment theorem_preset(std::string_view name) {
  TheoremExperiment t;
  t.instance.n = 24;
  t.instance.m = 16;
  t.instance.sparsity = 2;
  t.instance.q = 2;
  t.instance.frames = 30;
  t.instance.rho = 1.0;
  t.instance.noise_std = 0.01;
  t.instance.innovation_std = 0.02;
  t.filter.gamma = 8.0;
  t.filter.kappa = 0.5;
  if (name == "small") return t;
  if (name == "kappa-above-ceiling") {
    t.instance.rho = 1.5;
    t.filter.kappa = 4.0;
    return t;
  }
  if (name == "static") {
    // Without the dynamics term the iterate-norm restriction needs a much larger l1 weight.
    t.filter.kappa = 0.0;
    t.filter.gamma = 1000.0;
    return t;
  }
  throw ArgumentError("unknown theorem preset '" + std::string(name) + "' (known: small, kappa-above-ceiling, static)");
}

void to_json(nlohmann::json& j, const TheoremExperiment& t) {
  const auto& i = t.instance;
  j = {{"instance",
        {{"n", i.n}, {"m", i.m}, {"S", i.sparsity}, {"q", i.q}, {"T", i.frames}, {"rho", i.rho},
         {"noise_std", i.noise_std}, {"innovation_std", i.innovation_std}, {"amplitude", i.amplitude}}},
       {"gamma", t.filter.gamma},
       {"kappa", t.filter.kappa},
       {"solver", {{"max_iters", t.filter.solver.max_iters}, {"rel_tol", t.filter.solver.rel_tol}}},
       {"strict_threshold", t.filter.threshold_rule == ThresholdRule::kUnscaled},
       {"instances", t.num_instances},
       {"seed", t.master_seed}};
}

TheoremExperiment theorem_experiment_from_json(const nlohmann::json& j, TheoremExperiment t) {
  check_keys(j, {"preset", "instance", "gamma", "kappa", "solver", "strict_threshold", "instances", "seed"},
             "theorem config");
  try {
    if (j.contains("preset")) t = theorem_preset(j.at("preset").get<std::string>());
    if (j.contains("instance")) {
      const auto& i = j.at("instance");
      check_keys(i, {"n", "m", "S", "q", "T", "rho", "noise_std", "innovation_std", "amplitude"}, "instance");
      read_if(i, "n", t.instance.n);
      read_if(i, "m", t.instance.m);
      read_if(i, "S", t.instance.sparsity);
      read_if(i, "q", t.instance.q);
      read_if(i, "T", t.instance.frames);
      read_if(i, "rho", t.instance.rho);
      read_if(i, "noise_std", t.instance.noise_std);
      read_if(i, "innovation_std", t.instance.innovation_std);
      read_if(i, "amplitude", t.instance.amplitude);
    }
    read_if(j, "gamma", t.filter.gamma);
    read_if(j, "kappa", t.filter.kappa);
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      check_keys(s, {"max_iters", "rel_tol"}, "solver");
      read_if(s, "max_iters", t.filter.solver.max_iters);
      read_if(s, "rel_tol", t.filter.solver.rel_tol);
    }
    if (j.value("strict_threshold", false)) t.filter.threshold_rule = ThresholdRule::kUnscaled;
    read_if(j, "instances", t.num_instances);
    read_if(j, "seed", t.master_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("theorem config: ") + e.what());
  }
  if (t.num_instances < 1) throw ArgumentError("theorem config: instances must be >= 1");
  return t;
}

TheoremRun run_theorem_experiment(const TheoremExperiment& t, int workers) {
  if (t.num_instances < 1) throw ArgumentError("theorem experiment needs at least one instance");
  TheoremRun run;
  run.reports.resize(static_cast<std::size_t>(t.num_instances));
  parallel_for(
      t.num_instances, workers,
      [&](int k) {
        VerificationInstanceConfig cfg = t.instance;
        cfg.seed = trial_seed(t.master_seed, k);
        try {
          run.reports[static_cast<std::size_t>(k)] = verify_bound_empirically(make_verification_instance(cfg), t.filter);
        } catch (...) {
          rethrow_with_context("instance " + std::to_string(k) + ": ");
        }
      },
      {});
  for (const auto& r : run.reports) {
    run.conditions_met += r.conditions_met ? 1 : 0;
    run.bound_holds += r.bound_holds ? 1 : 0;
  }
  return run;
}

nlohmann::json theorem_run_to_json(const TheoremExperiment& t, const TheoremRun& run) {
  nlohmann::json reports = nlohmann::json::array();
  for (std::size_t k = 0; k < run.reports.size(); ++k) {
    auto r = report_to_json(run.reports[k]);
    r["instance"] = k;
    r["seed"] = trial_seed(t.master_seed, static_cast<int>(k));
    reports.push_back(std::move(r));
  }
  return {{"config", t},
          {"instances", run.reports.size()},
          {"conditions_met", run.conditions_met},
          {"bound_holds", run.bound_holds},
          {"reports", std::move(reports)}};
}

}  // namespace dynfilt
