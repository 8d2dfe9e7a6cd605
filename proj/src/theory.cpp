#include "dynfilt/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "dynfilt/errors.hpp"
#include "dynfilt/rng.hpp"

namespace dynfilt {

void TheoremInputs::validate() const {
  if (!(delta >= 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in [0, 1)");
  if (!(kappa >= 0.0)) throw ArgumentError("kappa must be >= 0");
  if (!(gamma >= 0.0)) throw ArgumentError("gamma must be >= 0");
  if (!(f_star >= 0.0)) throw ArgumentError("f* must be >= 0");
  if (q < 0) throw ArgumentError("q must be >= 0");
  if (!(b >= 0.0 && eps_max >= 0.0 && nu_max >= 0.0 && e0 >= 0.0)) {
    throw ArgumentError("b, eps_max, nu_max and e0 must be >= 0");
  }
}

TheoremConstants theorem_constants(const TheoremInputs& in) {
  in.validate();
  TheoremConstants c;
  const double denom = 1.0 + in.kappa - in.delta - in.kappa * in.f_star;
  c.denominator_positive = denom > 0.0;
  if (!c.denominator_positive) {
    c.beta = std::numeric_limits<double>::quiet_NaN();
    c.c1 = c.c2 = c.c3 = std::numeric_limits<double>::quiet_NaN();
    return c;
  }
  c.beta = in.kappa * in.f_star / (1.0 + in.kappa - in.delta);
  c.c1 = (1.0 + in.delta) * (1.0 + in.kappa) * in.gamma / denom;
  c.c2 = std::sqrt(1.0 + in.delta) / denom;
  c.c3 = in.kappa / denom;
  c.contractive = c.beta < 1.0;
  return c;
}

double steady_state_bound(const TheoremInputs& in, const TheoremConstants& c) {
  if (!c.valid()) throw StateError("theorem constants are invalid (non-positive denominator)");
  return c.c1 * std::sqrt(static_cast<double>(in.q)) + c.c2 * in.eps_max + c.c3 * in.nu_max;
}

double error_bound_at(int n, const TheoremInputs& in, const TheoremConstants& c) {
  if (n < 0) throw ArgumentError("error_bound_at: n must be >= 0");
  if (!c.valid() || !c.contractive) {
    throw StateError("error_bound_at: constants must be valid with beta < 1");
  }
  const double decay = std::pow(c.beta, n);
  return decay * in.e0 + (1.0 - decay) * steady_state_bound(in, c);
}

std::optional<double> kappa_admissible_max(double delta, double f_star) {
  if (f_star > 1.0) return (1.0 - delta) / (f_star - 1.0);
  return std::nullopt;
}

IterateNormCheck iterate_norm_feasible(const TheoremInputs& in, double step_size) {
  const double k = in.kappa;
  const double zk = step_size / (1.0 + k);
  const double root_q = std::sqrt(static_cast<double>(in.q));
  IterateNormCheck out;
  out.lhs = zk * (k + k * in.f_star + 1.0 + in.delta) * in.b + zk * std::sqrt(1.0 + in.delta) * in.eps_max +
            zk * k * in.nu_max;
  out.rhs = (1.0 - (std::abs(zk * (1.0 + k) - 1.0) + zk * in.delta) / (1.0 + k)) * in.gamma * root_q;
  out.feasible = out.lhs <= out.rhs && in.gamma > 0.0;
  return out;
}

ParameterCondition theorem_parameter_condition(const TheoremInputs& in) {
  const double gq = in.gamma * std::sqrt(static_cast<double>(in.q));
  ParameterCondition out;
  out.lhs = in.kappa * ((1.0 - in.f_star) * in.b - (1.0 + in.delta) * gq - in.nu_max);
  out.rhs = (1.0 + in.delta) * gq + std::sqrt(1.0 + in.delta) * in.eps_max - (1.0 - in.delta) * in.b;
  out.holds = out.lhs >= out.rhs;
  return out;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(r);
}

namespace {

// Lexicographic k-subset of {0..n-1} with the given rank.
std::vector<int> unrank_combination(std::uint64_t rank, int n, int k) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  int next = 0;
  for (int slot = 0; slot < k; ++slot) {
    for (int v = next; v < n; ++v) {
      const std::uint64_t below = binomial(n - v - 1, k - slot - 1);
      if (rank < below) {
        out.push_back(v);
        next = v + 1;
        break;
      }
      rank -= below;
    }
  }
  return out;
}

bool advance_combination(std::vector<int>& idx, int n) {
  const int k = static_cast<int>(idx.size());
  int i = k - 1;
  while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) return false;
  ++idx[static_cast<std::size_t>(i)];
  for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  return true;
}

struct Extremes {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
};

Extremes scan_range(const Matrix& a, int k, std::uint64_t begin, std::uint64_t end) {
  Extremes e;
  if (begin >= end) return e;
  const int n = static_cast<int>(a.cols());
  std::vector<int> idx = unrank_combination(begin, n, k);
  Matrix sub(a.rows(), k);
  for (std::uint64_t r = begin; r < end; ++r) {
    for (int j = 0; j < k; ++j) sub.col(j) = a.col(idx[static_cast<std::size_t>(j)]);
    const Eigen::JacobiSVD<Matrix> svd(sub);
    const auto& s = svd.singularValues();
    const double smax = s(0) * s(0);
    // Fewer rows than columns leaves a zero singular value that JacobiSVD omits.
    const double smin = k > a.rows() ? 0.0 : s(k - 1) * s(k - 1);
    e.hi = std::max(e.hi, smax);
    e.lo = std::min(e.lo, smin);
    if (r + 1 < end) advance_combination(idx, n);
  }
  return e;
}

}  // namespace

RipEstimate brute_force_rip(const Matrix& phi, const Matrix& W, int k, std::uint64_t cap, int workers) {
  if (phi.cols() != W.rows()) throw DimensionError("brute_force_rip: Phi.cols != W.rows");
  const Matrix a = phi * W;
  const int n = static_cast<int>(a.cols());
  if (k < 1 || k > n) throw ArgumentError("brute_force_rip: k must lie in [1, N']");
  const std::uint64_t total = binomial(n, k);
  if (total > cap) {
    throw CapacityError("brute_force_rip: C(" + std::to_string(n) + ", " + std::to_string(k) + ") = " +
                        std::to_string(total) + " subsets exceeds the cap of " + std::to_string(cap) +
                        "; use a smaller N' or sparsity level");
  }
  workers = std::max(1, workers);
  const auto chunks = static_cast<std::uint64_t>(std::min<std::uint64_t>(static_cast<std::uint64_t>(workers), total));
  std::vector<Extremes> parts(static_cast<std::size_t>(chunks));
  if (chunks <= 1) {
    parts[0] = scan_range(a, k, 0, total);
  } else {
    std::vector<std::thread> pool;
    for (std::uint64_t c = 0; c < chunks; ++c) {
      const std::uint64_t begin = total * c / chunks;
      const std::uint64_t end = total * (c + 1) / chunks;
      pool.emplace_back([&, c, begin, end] { parts[static_cast<std::size_t>(c)] = scan_range(a, k, begin, end); });
    }
    for (auto& t : pool) t.join();
  }
  Extremes all;
  for (const auto& p : parts) {
    all.lo = std::min(all.lo, p.lo);
    all.hi = std::max(all.hi, p.hi);
  }
  RipEstimate out;
  out.sigma_min_sq = all.lo;
  out.sigma_max_sq = all.hi;
  out.scale = 0.5 * (all.hi + all.lo);
  out.delta = out.scale > 0.0 ? (all.hi - all.lo) / (all.hi + all.lo) : 1.0;
  out.subsets = total;
  return out;
}

VerificationInstance make_verification_instance(const VerificationInstanceConfig& cfg) {
  if (cfg.n < 1 || cfg.m < 1) throw ArgumentError("verification instance needs n, m >= 1");
  if (cfg.sparsity < 1 || cfg.sparsity > cfg.n) throw ArgumentError("sparsity must lie in [1, n]");
  if (cfg.q < 0 || cfg.sparsity + 2 * cfg.q > cfg.n) throw ArgumentError("S + 2q must not exceed n");
  if (cfg.frames < 1) throw ArgumentError("frames must be >= 1");
  if (!(cfg.noise_std >= 0.0 && cfg.innovation_std >= 0.0)) throw ArgumentError("std devs must be >= 0");

  Rng rng(derive_seed(cfg.seed, kScenarioStream));
  const LinearOperator raw = gaussian_measurement(cfg.m, cfg.n, rng);
  const Matrix identity = Matrix::Identity(cfg.n, cfg.n);
  const RipEstimate rip = brute_force_rip(raw.matrix(), identity, cfg.sparsity + 2 * cfg.q,
                                          kDefaultEnumerationCap, cfg.rip_workers);
  if (!(rip.scale > 0.0) || !(rip.delta < 1.0)) {
    throw NumericalError("verification instance: Phi W is rank deficient at order S + 2q; use more rows");
  }

  VerificationInstance inst{LinearOperator::dense(raw.matrix() / std::sqrt(rip.scale)),
                            LinearOperator::identity(cfg.n),
                            DynamicsModel::scaled(cfg.rho),
                            Vector::Zero(cfg.n),
                            {},
                            {},
                            {},
                            {},
                            cfg.sparsity,
                            rip};
  inst.rip.scale = 1.0;
  inst.rip.sigma_min_sq = rip.sigma_min_sq / rip.scale;
  inst.rip.sigma_max_sq = rip.sigma_max_sq / rip.scale;

  std::vector<int> cells(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) cells[static_cast<std::size_t>(i)] = i;
  std::shuffle(cells.begin(), cells.end(), rng);
  std::uniform_real_distribution<double> amp(0.5 * cfg.amplitude, 1.5 * cfg.amplitude);
  std::bernoulli_distribution sign(0.5);
  for (int s = 0; s < cfg.sparsity; ++s) {
    inst.initial_state[cells[static_cast<std::size_t>(s)]] = (sign(rng) ? 1.0 : -1.0) * amp(rng);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Vector previous = inst.initial_state;
  for (int f = 1; f <= cfg.frames; ++f) {
    Vector nu = Vector::Zero(cfg.n);
    if (cfg.innovation_std > 0.0) {
      for (int s = 0; s < cfg.sparsity; ++s) nu[cells[static_cast<std::size_t>(s)]] = cfg.innovation_std * normal(rng);
    }
    Vector z = inst.dynamics.apply(previous, f) + nu;
    Vector eps = Vector::Zero(cfg.m);
    if (cfg.noise_std > 0.0) {
      for (int i = 0; i < cfg.m; ++i) eps[i] = cfg.noise_std * normal(rng);
    }
    inst.measurements.push_back(inst.phi.forward(z) + eps);
    inst.coefficients.push_back(z);
    inst.noise.push_back(std::move(eps));
    inst.innovations.push_back(std::move(nu));
    previous = inst.coefficients.back();
  }
  return inst;
}

VerificationReport verify_bound_empirically(const VerificationInstance& instance,
                                            const BpdnDfSettings& settings) {
  if (instance.coefficients.empty()) throw ArgumentError("verification instance has no frames");
  if (instance.measurements.size() != instance.coefficients.size()) {
    throw DimensionError("verification instance: measurement/state count mismatch");
  }
  VerificationReport report;
  TheoremInputs& in = report.inputs;
  in.delta = instance.rip.delta;
  in.kappa = settings.kappa;
  in.gamma = settings.gamma;
  in.f_star = instance.dynamics.smoothness_bound().value_or(std::numeric_limits<double>::infinity());
  in.q = std::max(instance.sparsity, 0);
  double max_state = instance.initial_state.norm();
  for (const auto& z : instance.coefficients) max_state = std::max(max_state, z.norm());
  in.b = 2.0 * max_state;
  for (const auto& e : instance.noise) in.eps_max = std::max(in.eps_max, e.norm());
  for (const auto& v : instance.innovations) in.nu_max = std::max(in.nu_max, v.norm());
  in.e0 = instance.initial_state.norm();

  report.constants = theorem_constants(in);
  report.step_size = analysis_step_size(in.delta);
  report.iterate_norm = iterate_norm_feasible(in, report.step_size);
  report.parameter_condition = theorem_parameter_condition(in);
  report.kappa_max = kappa_admissible_max(in.delta, in.f_star);

  if (!std::isfinite(in.f_star)) report.unmet.emplace_back("dynamics has no smoothness bound f*");
  if (!report.constants.denominator_positive) report.unmet.emplace_back("1 + kappa - delta - kappa f* <= 0");
  if (!report.constants.contractive) report.unmet.emplace_back("beta >= 1");
  if (report.kappa_max && !(in.kappa < *report.kappa_max)) report.unmet.emplace_back("kappa above the admissible ceiling");
  if (!report.iterate_norm.feasible) report.unmet.emplace_back("iterate-norm restriction infeasible");
  report.conditions_met = report.unmet.empty();

  // Run the filter regardless so the report always carries the empirical errors.
  FilterState state;
  state.previous_estimate = Vector::Zero(instance.W.cols());
  report.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < instance.coefficients.size(); ++f) {
    const int frame = static_cast<int>(f) + 1;
    const Vector prediction = instance.dynamics.apply(instance.W.forward(state.previous_estimate), frame);
    IstaConfig cfg;
    cfg.max_iters = settings.solver.max_iters;
    cfg.rel_tol = settings.solver.rel_tol;
    cfg.threshold_rule = settings.threshold_rule;
    cfg.record_trace = false;
    cfg.warm_start = state.previous_estimate;
    const auto res = solve_bpdn_df(instance.phi, instance.measurements[f], in.gamma, in.kappa, prediction,
                                   instance.W, cfg);
    state.previous_estimate = res.coefficients;

    FrameBoundCheck check;
    check.frame = frame;
    check.empirical_error = (res.coefficients - instance.coefficients[f]).norm();
    if (report.constants.valid() && report.constants.contractive) {
      check.bound = error_bound_at(frame, in, report.constants);
      check.margin = check.bound - check.empirical_error;
      report.min_margin = std::min(report.min_margin, check.margin);
    } else {
      check.bound = std::numeric_limits<double>::quiet_NaN();
      check.margin = std::numeric_limits<double>::quiet_NaN();
    }
    if (in.b > 0.0) report.max_error_over_b = std::max(report.max_error_over_b, check.empirical_error / in.b);
    report.frames.push_back(check);
  }
  report.bound_holds = report.conditions_met && report.min_margin >= 0.0;
  return report;
}

nlohmann::json report_to_json(const VerificationReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"frame", f.frame},
                      {"empirical_error", f.empirical_error},
                      {"bound", num(f.bound)},
                      {"margin", num(f.margin)}});
  }
  const auto& in = r.inputs;
  const auto& c = r.constants;
  return {
      {"status", r.conditions_met ? (r.bound_holds ? "bound holds" : "bound violated") : "conditions unmet"},
      {"unmet", r.unmet},
      {"inputs",
       {{"delta", in.delta}, {"kappa", in.kappa}, {"gamma", in.gamma}, {"f_star", in.f_star}, {"q", in.q},
        {"b", in.b}, {"eps_max", in.eps_max}, {"nu_max", in.nu_max}, {"e0", in.e0}}},
      {"constants",
       {{"beta", num(c.beta)}, {"C1", num(c.c1)}, {"C2", num(c.c2)}, {"C3", num(c.c3)},
        {"contractive", c.contractive}, {"denominator_positive", c.denominator_positive}}},
      {"flags",
       {{"beta_lt_1", c.contractive},
        {"kappa_admissible", !r.kappa_max || in.kappa < *r.kappa_max},
        {"kappa_max", r.kappa_max ? nlohmann::json(*r.kappa_max) : nlohmann::json(nullptr)},
        {"iterate_norm_feasible", r.iterate_norm.feasible},
        {"iterate_norm_lhs", r.iterate_norm.lhs},
        {"iterate_norm_rhs", r.iterate_norm.rhs},
        {"step_size", r.step_size},
        {"parameter_condition", r.parameter_condition.holds},
        {"parameter_condition_lhs", r.parameter_condition.lhs},
        {"parameter_condition_rhs", r.parameter_condition.rhs}}},
      {"min_margin", num(r.min_margin)},
      {"max_error_over_b", r.max_error_over_b},
      {"frames", std::move(frames)},
  };
}

}  // namespace dynfilt
