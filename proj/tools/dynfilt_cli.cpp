// Batch experiment runner: single trials, sweeps, EM convergence profiles and
// bound verification on small instances.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dynfilt/errors.hpp"
#include "dynfilt/experiment.hpp"
#include "dynfilt/kernels.hpp"

namespace fs = std::filesystem;
using dynfilt::ExperimentSpec;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> frames;
  int workers = 1;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--preset", f.preset, "named preset");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--trials", f.trials, "number of trials (instances for verify-theorem)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--quiet", f.quiet, "no progress output");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dynfilt::ArgumentError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw dynfilt::ArgumentError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

ExperimentSpec load_spec(const CommonFlags& f, const std::string& default_preset) {
  ExperimentSpec spec = dynfilt::preset(f.preset.empty() ? default_preset : f.preset);
  if (!f.config.empty()) {
    json j = read_json(f.config);
    // An explicit --preset wins over a preset named in the file.
    if (!f.preset.empty()) j.erase("preset");
    spec = dynfilt::spec_from_json(j, spec);
  }
  if (f.seed) spec.master_seed = *f.seed;
  if (f.trials) spec.num_trials = *f.trials;
  if (f.frames) spec.scenario.num_frames = *f.frames;
  if (!f.out.empty()) spec.output_dir = f.out;
  spec.validate();
  return spec;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << std::setw(2) << j << '\n';
  if (!os) throw std::runtime_error("failed to write " + path.string());
}

dynfilt::ProgressFn progress_printer(const CommonFlags& f, const std::string& label) {
  if (f.quiet) return {};
  return [label](int done, int total) {
    std::fprintf(stderr, "\r%s %d/%d", label.c_str(), done, total);
    if (done == total) std::fprintf(stderr, "\n");
  };
}

json improvement_table(const std::vector<dynfilt::TrialResult>& results) {
  std::map<std::string, std::vector<std::vector<double>>> by_algorithm;
  for (const auto& r : results) by_algorithm[r.algorithm_id].push_back(r.per_frame_rmse);
  json out = json::object();
  const auto ref = by_algorithm.find("rwl1_df");
  if (ref == by_algorithm.end()) return out;
  for (const auto& [id, series] : by_algorithm) {
    if (id == "rwl1_df") continue;
    const auto s = dynfilt::improvement_stats(ref->second, series);
    out[id] = {{"mean_pct", s.mean_pct}, {"median_pct", s.median_pct}};
  }
  return out;
}

void print_steady_state(const std::map<std::string, dynfilt::AlgorithmSummary>& summary) {
  for (const auto& [id, s] : summary) {
    std::cout << std::left << std::setw(10) << id << " steady-state rMSE " << std::setprecision(6)
              << s.steady_state_mean << "  median EM iterations " << s.median_em_iterations << '\n';
  }
}

int cmd_trial(const CommonFlags& f) {
  const ExperimentSpec spec = load_spec(f, "fig3a");
  const auto out = prepare_out(spec.output_dir);
  const auto results = dynfilt::run_trials(spec, f.workers, progress_printer(f, "trials"));
  {
    std::ofstream csv(out / "trials.csv");
    dynfilt::write_trial_csv(csv, results);
  }
  const auto summary = dynfilt::summarize(results, 50, spec.burn_in);
  json j{{"config", spec},
         {"kernels", dynfilt::kernels::backend_name(dynfilt::kernels::active().backend)},
         {"summary", dynfilt::summary_to_json(summary)},
         {"rwl1_df_improvement", improvement_table(results)}};
  write_json(out / "summary.json", j);
  print_steady_state(summary);
  std::cout << "wrote " << (out / "trials.csv").string() << " and " << (out / "summary.json").string() << '\n';
  return 0;
}

std::string value_label(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

int cmd_sweep(const CommonFlags& f) {
  const ExperimentSpec spec = load_spec(f, "fig3b-sweep");
  if (!spec.sweep) throw dynfilt::ArgumentError("sweep: the selected preset/config has no sweep");
  const auto out = prepare_out(spec.output_dir);
  const auto result = dynfilt::run_sweep(spec, f.workers, progress_printer(f, "sweep trials"));
  std::ofstream table(out / "sweep.csv");
  table << "parameter,value,algorithm,steady_state_mean\n" << std::setprecision(17);
  for (const auto& p : result.points) {
    for (const auto& [id, v] : p.steady_state_mean) {
      table << result.parameter << ',' << p.value << ',' << id << ',' << v << '\n';
    }
    std::ofstream csv(out / ("trials_" + result.parameter + "_" + value_label(p.value) + ".csv"));
    dynfilt::write_trial_csv(csv, p.trials);
  }
  json j{{"config", spec}, {"sweep", dynfilt::sweep_to_json(result)}};
  write_json(out / "sweep.json", j);
  for (const auto& p : result.points) {
    std::cout << result.parameter << " = " << p.value << ':';
    for (const auto& [id, v] : p.steady_state_mean) std::cout << ' ' << id << '=' << std::setprecision(5) << v;
    std::cout << '\n';
  }
  std::cout << "wrote " << (out / "sweep.csv").string() << " and " << (out / "sweep.json").string() << '\n';
  return 0;
}

int cmd_convergence(const CommonFlags& f) {
  const ExperimentSpec spec = load_spec(f, "fig3a");
  const auto out = prepare_out(spec.output_dir);
  const auto profile = dynfilt::run_convergence(spec, f.workers, progress_printer(f, "trials"));
  {
    std::ofstream csv(out / "convergence.csv");
    dynfilt::write_trial_csv(csv, profile.trials);
  }
  json j{{"config", spec}, {"convergence", dynfilt::convergence_to_json(profile)}};
  write_json(out / "convergence.json", j);
  for (const auto& [id, m] : profile.median_em_iterations) {
    std::cout << id << " median EM iterations " << m << " (max " << profile.max_em_iterations.at(id) << ")\n";
  }
  std::cout << "wrote " << (out / "convergence.csv").string() << " and " << (out / "convergence.json").string()
            << '\n';
  return 0;
}

int cmd_verify(const CommonFlags& f) {
  dynfilt::TheoremExperiment t = dynfilt::theorem_preset(f.preset.empty() ? "small" : f.preset);
  if (!f.config.empty()) {
    json j = read_json(f.config);
    if (!f.preset.empty()) j.erase("preset");
    t = dynfilt::theorem_experiment_from_json(j, t);
  }
  if (f.seed) t.master_seed = *f.seed;
  if (f.trials) t.num_instances = *f.trials;
  if (f.frames) t.instance.frames = *f.frames;
  t.instance.rip_workers = 1;
  const auto out = prepare_out(f.out.empty() ? "out" : f.out);
  const auto run = dynfilt::run_theorem_experiment(t, f.workers);
  {
    std::ofstream csv(out / "theorem_frames.csv");
    csv << "instance,frame,empirical_error,bound,margin\n" << std::setprecision(17);
    for (std::size_t k = 0; k < run.reports.size(); ++k) {
      for (const auto& fr : run.reports[k].frames) {
        csv << k << ',' << fr.frame << ',' << fr.empirical_error << ',' << fr.bound << ',' << fr.margin << '\n';
      }
    }
  }
  write_json(out / "theorem_report.json", dynfilt::theorem_run_to_json(t, run));
  for (std::size_t k = 0; k < run.reports.size(); ++k) {
    const auto& r = run.reports[k];
    std::cout << "instance " << k << ": delta=" << std::setprecision(4) << r.inputs.delta;
    if (r.conditions_met) {
      std::cout << (r.bound_holds ? " bound holds" : " BOUND VIOLATED") << ", min margin " << r.min_margin;
    } else {
      std::cout << " conditions unmet:";
      for (const auto& u : r.unmet) std::cout << " [" << u << ']';
    }
    std::cout << '\n';
  }
  std::cout << run.conditions_met << '/' << run.reports.size() << " instances meet the conditions, "
            << run.bound_holds << " satisfy the bound\n";
  std::cout << "wrote " << (out / "theorem_report.json").string() << '\n';
  return run.conditions_met == run.bound_holds ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic filtering experiments for time-varying sparse signals"};
  app.require_subcommand(1);

  CommonFlags trial_flags, sweep_flags, conv_flags, verify_flags;
  auto* trial = app.add_subcommand("trial", "run trials of one configuration; per-frame CSV + JSON summary");
  auto* sweep = app.add_subcommand("sweep", "sweep one scenario parameter; steady-state table per value");
  auto* conv = app.add_subcommand("convergence", "per-frame EM iteration counts of the reweighted filters");
  auto* verify = app.add_subcommand("verify-theorem", "check the BPDN-DF error bound on small instances");
  for (auto [cmd, flags] : {std::pair{trial, &trial_flags}, std::pair{sweep, &sweep_flags},
                            std::pair{conv, &conv_flags}, std::pair{verify, &verify_flags}}) {
    add_common(cmd, *flags);
    cmd->add_option("--frames", flags->frames, "override the number of frames T")->check(CLI::PositiveNumber);
  }
  std::string kernels;
  app.add_option("--kernels", kernels, "kernel backend (scalar or avx2)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (!kernels.empty()) {
      if (kernels == "scalar") {
        dynfilt::kernels::set_backend(dynfilt::kernels::Backend::kScalar);
      } else if (kernels == "avx2") {
        dynfilt::kernels::set_backend(dynfilt::kernels::Backend::kAvx2);
      } else {
        throw dynfilt::ArgumentError("--kernels must be scalar or avx2");
      }
    }
    if (*trial) return cmd_trial(trial_flags);
    if (*sweep) return cmd_sweep(sweep_flags);
    if (*conv) return cmd_convergence(conv_flags);
    if (*verify) return cmd_verify(verify_flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
