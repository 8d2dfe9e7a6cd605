#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dynfilt/errors.hpp"
#include "dynfilt/experiment.hpp"

using namespace dynfilt;

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.scenario.grid_side = 8;
  spec.scenario.num_targets = 3;
  spec.scenario.num_frames = 12;
  spec.scenario.num_measurements = 24;
  spec.num_trials = 2;
  spec.burn_in = 4;
  spec.master_seed = 99;
  spec.solver = SolverSettings{1000, 1e-5};
  for (const auto& id : algorithm_ids()) spec.algorithms.push_back({id, {}});
  return spec;
}

std::string csv(const std::vector<TrialResult>& results) {
  std::ostringstream os;
  write_trial_csv(os, results);
  return os.str();
}

TEST(Experiment, AlgorithmIdsCoverEveryFilter) {
  const auto& ids = algorithm_ids();
  for (const char* id : {"bpdn", "rwl1", "bpdn_df", "rwl1_df", "kalman", "oracle"}) {
    EXPECT_NE(std::find(ids.begin(), ids.end(), id), ids.end()) << id;
  }
}

TEST(Experiment, SameSeedIsBitIdentical) {
  const auto spec = small_spec();
  const auto a = run_trials(spec);
  const auto b = run_trials(spec);
  EXPECT_EQ(csv(a), csv(b));
  auto other = spec;
  other.master_seed = 100;
  EXPECT_NE(csv(run_trials(other)), csv(a));
}

TEST(Experiment, WorkerCountDoesNotChangeResults) {
  const auto spec = small_spec();
  EXPECT_EQ(csv(run_trials(spec, 1)), csv(run_trials(spec, 3)));
}

TEST(Experiment, TrialEmitsOneRowPerFrame) {
  const auto spec = small_spec();
  const auto results = run_trial(spec, 0);
  ASSERT_EQ(results.size(), spec.algorithms.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].algorithm_id, spec.algorithms[i].id);
    EXPECT_EQ(results[i].per_frame_rmse.size(), 12u);
    EXPECT_EQ(results[i].em_iterations.size(), 12u);
    EXPECT_EQ(results[i].seed, trial_seed(99, 0));
    EXPECT_EQ(results[i].config["algorithm"]["id"], spec.algorithms[i].id);
    for (double v : results[i].per_frame_rmse) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Experiment, NoiselessOracleIsExact) {
  auto spec = small_spec();
  spec.scenario.noise_var = 0.0;
  spec.algorithms = {{"oracle", {}}};
  for (const auto& r : run_trials(spec)) {
    for (double v : r.per_frame_rmse) EXPECT_LT(v, 1e-10);
  }
}

TEST(Experiment, DefaultsDependOnScenario) {
  ScenarioConfig sc;
  sc.noise_var = 0.002;
  sc.change_prob = 0.25;
  sc.num_targets = 20;
  EXPECT_DOUBLE_EQ(resolve_params({"bpdn", {}}, sc)["gamma"].get<double>(), 0.0011);
  EXPECT_DOUBLE_EQ(resolve_params({"bpdn_df", {}}, sc)["gamma"].get<double>(), 0.001);
  EXPECT_DOUBLE_EQ(resolve_params({"bpdn_df", {}}, sc)["kappa"].get<double>(), 0.0007 / 1.25);
  EXPECT_DOUBLE_EQ(resolve_params({"rwl1_df", {}}, sc)["eta"].get<double>(), 0.975);
  EXPECT_DOUBLE_EQ(resolve_params({"rwl1", {}}, sc)["beta"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(resolve_params({"rwl1_df", {{"tau", 3.0}}}, sc)["tau"].get<double>(), 3.0);
  EXPECT_THROW(resolve_params({"nope", {}}, sc), ArgumentError);
}

TEST(Experiment, ValidationErrors) {
  auto spec = small_spec();
  spec.algorithms.push_back({"bpdn", {}});
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec = small_spec();
  spec.burn_in = 12;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec = small_spec();
  spec.algorithms = {{"rwl1", {{"typo", 1.0}}}};
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec = small_spec();
  spec.scenario.num_targets = 65;
  EXPECT_THROW(spec.validate(), CapacityError);
}

TEST(Sweep, EmptyOrMissingSweepThrows) {
  auto spec = small_spec();
  EXPECT_THROW(run_sweep(spec), ArgumentError);
  spec.sweep = SweepSpec{"M", {}};
  EXPECT_THROW(run_sweep(spec), ArgumentError);
  EXPECT_THROW(apply_sweep_value(spec, "bogus", 1.0), ArgumentError);
  EXPECT_THROW(apply_sweep_value(spec, "M", 10.5), ArgumentError);
}

TEST(Sweep, AppliesValuesAndAveragesSteadyState) {
  auto spec = small_spec();
  spec.algorithms = {{"bpdn", {}}, {"oracle", {}}};
  spec.sweep = SweepSpec{"M", {16, 32}};
  const auto result = run_sweep(spec);
  ASSERT_EQ(result.points.size(), 2u);
  for (const auto& point : result.points) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : point.trials) {
      EXPECT_EQ(r.config["scenario"]["M"].get<int>(), static_cast<int>(point.value));
      if (r.algorithm_id == "bpdn") {
        sum += steady_state_mean(r.per_frame_rmse, spec.burn_in);
        ++count;
      }
    }
    EXPECT_DOUBLE_EQ(point.steady_state_mean.at("bpdn"), sum / count);
  }
  EXPECT_DOUBLE_EQ(apply_sweep_value(spec, "2Sp", 3.0).scenario.change_prob, 0.5);
  const auto j = sweep_to_json(result);
  EXPECT_EQ(j["parameter"], "M");
  EXPECT_EQ(j["points"].size(), 2u);
}

TEST(Convergence, ProfilesOnlyEmFilters) {
  const auto profile = run_convergence(small_spec());
  EXPECT_EQ(profile.algorithms, (std::vector<std::string>{"rwl1", "rwl1_df"}));
  for (const auto& r : profile.trials) {
    for (int it : r.em_iterations) {
      EXPECT_GE(it, 1);
      EXPECT_LE(it, 25);
    }
  }
  EXPECT_LE(profile.median_em_iterations.at("rwl1_df"), profile.max_em_iterations.at("rwl1_df"));
  const auto j = convergence_to_json(profile);
  int counted = 0;
  for (const auto& [key, n] : j["em_iteration_counts"]["rwl1_df"].items()) counted += n.get<int>();
  EXPECT_EQ(counted, 2 * 12);
  auto spec = small_spec();
  spec.algorithms = {{"bpdn", {}}};
  EXPECT_THROW(run_convergence(spec), ArgumentError);
}

TEST(Presets, KnownNamesAndContents) {
  for (const auto& name : preset_names()) EXPECT_NO_THROW(preset(name).validate()) << name;
  const auto a = preset("fig3a");
  EXPECT_EQ(a.scenario.grid_side, 24);
  EXPECT_EQ(a.scenario.num_targets, 20);
  EXPECT_EQ(a.scenario.num_measurements, 80);
  EXPECT_EQ(a.scenario.num_frames, 100);
  EXPECT_EQ(a.num_trials, 40);
  EXPECT_FALSE(a.sweep.has_value());
  EXPECT_EQ(preset("fig3b-sweep").sweep->parameter, "M");
  EXPECT_EQ(preset("fig3c-sweep").sweep->values, (std::vector<double>{2, 4, 6, 8, 10}));
  EXPECT_THROW(preset("fig9"), ArgumentError);
}

TEST(SpecJson, RoundTripsAndRejectsUnknownKeys) {
  auto spec = small_spec();
  spec.sweep = SweepSpec{"p", {0.1, 0.2}};
  spec.algorithms[0].params = {{"gamma", 0.5}};
  nlohmann::json j;
  to_json(j, spec);
  const auto back = spec_from_json(nlohmann::json::parse(j.dump()));
  nlohmann::json j2;
  to_json(j2, back);
  EXPECT_EQ(j, j2);
  EXPECT_EQ(back.master_seed, 99u);
  EXPECT_DOUBLE_EQ(resolve_params(back.algorithms[0], back.scenario)["gamma"].get<double>(), 0.5);

  EXPECT_THROW(spec_from_json({{"trails", 3}}), ArgumentError);
  EXPECT_THROW(spec_from_json({{"scenario", {{"NN", 3}}}}), ArgumentError);
  EXPECT_THROW(spec_from_json({{"scenario", {{"N", 50}}}}), ArgumentError);
  const auto from_preset = spec_from_json({{"preset", "fig3b-sweep"}, {"trials", 3}});
  EXPECT_EQ(from_preset.num_trials, 3);
  EXPECT_EQ(from_preset.sweep->parameter, "M");
  const auto strings = spec_from_json({{"algorithms", {"bpdn", "oracle"}}});
  ASSERT_EQ(strings.algorithms.size(), 2u);
  EXPECT_EQ(strings.algorithms[1].id, "oracle");
}

TEST(TheoremPresets, FlagsMatchDesign) {
  EXPECT_EQ(theorem_preset_names().size(), 3u);
  auto small = theorem_preset("small");
  small.num_instances = 2;
  const auto run = run_theorem_experiment(small);
  EXPECT_EQ(run.conditions_met, 2);
  EXPECT_EQ(run.bound_holds, 2);
  auto above = theorem_preset("kappa-above-ceiling");
  above.num_instances = 1;
  above.instance.frames = 5;
  const auto bad = run_theorem_experiment(above);
  EXPECT_EQ(bad.conditions_met, 0);
  const auto j = theorem_run_to_json(above, bad);
  EXPECT_TRUE(j.is_object());
  EXPECT_THROW(theorem_preset("huge"), ArgumentError);
  const auto parsed = theorem_experiment_from_json({{"preset", "static"}, {"instances", 4}, {"seed", 8}});
  EXPECT_EQ(parsed.num_instances, 4);
  EXPECT_EQ(parsed.master_seed, 8u);
  EXPECT_DOUBLE_EQ(parsed.filter.kappa, 0.0);
  EXPECT_THROW(theorem_experiment_from_json({{"instance", {{"bogus", 1}}}}), ArgumentError);
}

}  // namespace
