#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "dynfilt/errors.hpp"
#include "dynfilt/experiment.hpp"
#include "dynfilt/theory.hpp"
#include "support.hpp"

using namespace dynfilt;
using dynfilt::testing::random_matrix;

namespace {

TheoremInputs inputs(double delta, double kappa, double gamma, double f_star) {
  TheoremInputs in;
  in.delta = delta;
  in.kappa = kappa;
  in.gamma = gamma;
  in.f_star = f_star;
  in.q = 4;
  in.b = 2.0;
  in.eps_max = 0.1;
  in.nu_max = 0.2;
  in.e0 = 1.0;
  return in;
}

TEST(TheoremConstants, StaticCaseHasNoTransient) {
  const auto in = inputs(0.2, 0.0, 0.5, 1.0);
  const auto c = theorem_constants(in);
  EXPECT_TRUE(c.valid());
  EXPECT_TRUE(c.contractive);
  EXPECT_DOUBLE_EQ(c.beta, 0.0);
  EXPECT_NEAR(c.c1, 1.2 * 0.5 / 0.8, 1e-15);
  EXPECT_NEAR(c.c2, std::sqrt(1.2) / 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(c.c3, 0.0);
}

TEST(TheoremConstants, HandExample) {
  const auto in = inputs(0.1, 0.5, 1.0, 1.0);
  const auto c = theorem_constants(in);
  EXPECT_NEAR(c.beta, 0.5 / 1.4, 1e-15);
  EXPECT_NEAR(c.c1, 1.1 * 1.5 / 0.9, 1e-14);
  EXPECT_NEAR(c.c2, std::sqrt(1.1) / 0.9, 1e-14);
  EXPECT_NEAR(c.c3, 0.5 / 0.9, 1e-15);
  EXPECT_NEAR(steady_state_bound(in, c), c.c1 * 2.0 + c.c2 * 0.1 + c.c3 * 0.2, 1e-14);
}

TEST(TheoremConstants, BetaOneIsRejected) {
  // kappa f* = 1 + kappa - delta puts beta at exactly 1 and the denominator at 0.
  const auto c = theorem_constants(inputs(0.5, 1.0, 1.0, 1.5));
  EXPECT_FALSE(c.valid());
  EXPECT_FALSE(c.contractive);
  EXPECT_THROW(error_bound_at(3, inputs(0.5, 1.0, 1.0, 1.5), c), StateError);
  EXPECT_THROW(steady_state_bound(inputs(0.5, 1.0, 1.0, 1.5), c), StateError);
}

TEST(TheoremConstants, RejectsInvalidInputs) {
  EXPECT_THROW(theorem_constants(inputs(1.0, 0.5, 1.0, 1.0)), ArgumentError);
  EXPECT_THROW(theorem_constants(inputs(0.1, -0.5, 1.0, 1.0)), ArgumentError);
  auto in = inputs(0.1, 0.5, 1.0, 1.0);
  in.q = -1;
  EXPECT_THROW(theorem_constants(in), ArgumentError);
}

TEST(ErrorBound, StartLimitAndComposite) {
  const auto in = inputs(0.1, 0.5, 1.0, 1.0);
  const auto c = theorem_constants(in);
  const double steady = steady_state_bound(in, c);
  EXPECT_DOUBLE_EQ(error_bound_at(0, in, c), in.e0);
  EXPECT_NEAR(error_bound_at(500, in, c), steady, 1e-12);
  const double b3 = std::pow(c.beta, 3);
  EXPECT_NEAR(error_bound_at(3, in, c), b3 * in.e0 + (1.0 - b3) * steady, 1e-14);
  EXPECT_THROW(error_bound_at(-1, in, c), ArgumentError);
}

TEST(KappaCeiling, Examples) {
  EXPECT_DOUBLE_EQ(kappa_admissible_max(0.5, 1.5).value(), 1.0);
  EXPECT_DOUBLE_EQ(kappa_admissible_max(0.25, 1.5).value(), 1.5);
  EXPECT_FALSE(kappa_admissible_max(0.5, 1.0).has_value());
  EXPECT_FALSE(kappa_admissible_max(0.5, 0.3).has_value());
}

TEST(IterateNorm, Examples) {
  auto in = inputs(0.1, 0.5, 1.0, 1.0);
  in.b = 0.1;
  in.eps_max = 0.0;
  in.nu_max = 0.0;
  const double step = analysis_step_size(in.delta);
  const auto ok = iterate_norm_feasible(in, step);
  EXPECT_TRUE(ok.feasible);
  const double zk = step / 1.5;
  EXPECT_NEAR(ok.lhs, zk * 2.1 * 0.1, 1e-14);
  EXPECT_NEAR(ok.rhs, (1.0 - (std::abs(zk * 1.5 - 1.0) + zk * 0.1) / 1.5) * 2.0, 1e-14);
  in.b *= 100.0;
  EXPECT_FALSE(iterate_norm_feasible(in, step).feasible);
  in.b = 0.0;
  EXPECT_TRUE(iterate_norm_feasible(in, step).feasible);
  in.gamma = 0.0;
  EXPECT_FALSE(iterate_norm_feasible(in, step).feasible);
}

TEST(ParameterCondition, HandExample) {
  const auto in = inputs(0.1, 0.5, 1.0, 1.0);
  const auto pc = theorem_parameter_condition(in);
  EXPECT_NEAR(pc.lhs, 0.5 * (0.0 - 1.1 * 2.0 - 0.2), 1e-14);
  EXPECT_NEAR(pc.rhs, 1.1 * 2.0 + std::sqrt(1.1) * 0.1 - 0.9 * 2.0, 1e-14);
  EXPECT_FALSE(pc.holds);
}

TEST(Binomial, Values) {
  EXPECT_EQ(binomial(24, 6), 134596u);
  EXPECT_EQ(binomial(5, 0), 1u);
  EXPECT_EQ(binomial(3, 4), 0u);
  EXPECT_EQ(binomial(1000, 500), std::numeric_limits<std::uint64_t>::max());
}

TEST(BruteForceRip, IdentityHasZeroDelta) {
  const auto r = brute_force_rip(Matrix::Identity(6, 6), Matrix::Identity(6, 6), 3);
  EXPECT_NEAR(r.delta, 0.0, 1e-14);
  EXPECT_NEAR(r.scale, 1.0, 1e-14);
  EXPECT_EQ(r.subsets, 20u);
}

TEST(BruteForceRip, DiagonalHandExample) {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = std::sqrt(2.0);
  d(1, 1) = std::sqrt(0.5);
  const auto r = brute_force_rip(d, Matrix::Identity(2, 2), 1);
  EXPECT_NEAR(r.delta, 0.6, 1e-14);
  EXPECT_NEAR(r.scale, 1.25, 1e-14);
}

// Extreme eigenvalues of every k-column Gram matrix, enumerated by bitmask.
std::pair<double, double> gram_extremes(const Matrix& a, int k) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  const int n = static_cast<int>(a.cols());
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    Matrix sub(a.rows(), k);
    int col = 0;
    for (int j = 0; j < n; ++j) {
      if (mask & (1u << j)) sub.col(col++) = a.col(j);
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sub.transpose() * sub);
    lo = std::min(lo, std::max(eig.eigenvalues()(0), 0.0));
    hi = std::max(hi, eig.eigenvalues()(k - 1));
  }
  return {lo, hi};
}

TEST(BruteForceRip, MatchesGramEigenvalueOracle) {
  Rng rng(51);
  const Matrix phi = random_matrix(12, 24, rng) / std::sqrt(12.0);
  const Matrix W = Matrix::Identity(24, 24);
  const auto [lo, hi] = gram_extremes(phi, 4);
  const auto r = brute_force_rip(phi, W, 4, kDefaultEnumerationCap, 3);
  EXPECT_NEAR(r.sigma_min_sq, lo, 1e-10);
  EXPECT_NEAR(r.sigma_max_sq, hi, 1e-10);
  EXPECT_NEAR(r.delta, (hi - lo) / (hi + lo), 1e-10);
  const auto single = brute_force_rip(phi, W, 4, kDefaultEnumerationCap, 1);
  EXPECT_EQ(single.sigma_min_sq, r.sigma_min_sq);
  EXPECT_EQ(single.sigma_max_sq, r.sigma_max_sq);
}

TEST(BruteForceRip, NonDecreasingInOrder) {
  Rng rng(52);
  const Matrix phi = random_matrix(10, 14, rng);
  const Matrix W = Matrix::Identity(14, 14);
  double last = 0.0;
  for (int k = 1; k <= 6; ++k) {
    const double d = brute_force_rip(phi, W, k).delta;
    EXPECT_GE(d, last - 1e-12) << "k " << k;
    last = d;
  }
  EXPECT_NEAR(brute_force_rip(phi, W, 11).delta, 1.0, 1e-12);
}

TEST(BruteForceRip, CapacityAndArgumentErrors) {
  const Matrix phi = Matrix::Ones(4, 60);
  EXPECT_THROW(brute_force_rip(phi, Matrix::Identity(60, 60), 10), CapacityError);
  EXPECT_THROW(brute_force_rip(phi, Matrix::Identity(60, 60), 0), ArgumentError);
  EXPECT_THROW(brute_force_rip(phi, Matrix::Identity(5, 5), 1), DimensionError);
}

TEST(VerificationInstance, NormalizedAndConsistent) {
  auto cfg = theorem_preset("small").instance;
  cfg.seed = 3;
  cfg.frames = 5;
  const auto inst = make_verification_instance(cfg);
  EXPECT_DOUBLE_EQ(inst.rip.scale, 1.0);
  EXPECT_NEAR(0.5 * (inst.rip.sigma_min_sq + inst.rip.sigma_max_sq), 1.0, 1e-12);
  const auto again = brute_force_rip(inst.phi.matrix(), Matrix::Identity(cfg.n, cfg.n), cfg.sparsity + 2 * cfg.q);
  EXPECT_NEAR(again.scale, 1.0, 1e-10);
  EXPECT_NEAR(again.delta, inst.rip.delta, 1e-10);
  ASSERT_EQ(inst.coefficients.size(), 5u);
  Vector prev = inst.initial_state;
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_LE((inst.coefficients[f] - cfg.rho * prev - inst.innovations[f]).norm(), 1e-14);
    EXPECT_LE((inst.measurements[f] - inst.phi.forward(inst.coefficients[f]) - inst.noise[f]).norm(), 1e-12);
    prev = inst.coefficients[f];
  }
}

TEST(VerifyBound, HoldsOnFeasibleInstances) {
  const auto t = theorem_preset("small");
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto cfg = t.instance;
    cfg.seed = seed;
    const auto report = verify_bound_empirically(make_verification_instance(cfg), t.filter);
    EXPECT_TRUE(report.conditions_met) << "seed " << seed;
    EXPECT_TRUE(report.bound_holds) << "seed " << seed;
    EXPECT_GE(report.min_margin, 0.0);
    EXPECT_LE(report.max_error_over_b, 1.0);
    EXPECT_EQ(static_cast<int>(report.frames.size()), cfg.frames);
    EXPECT_EQ(report_to_json(report)["status"], "bound holds");
  }
}

TEST(VerifyBound, KappaAboveCeilingIsFlagged) {
  const auto t = theorem_preset("kappa-above-ceiling");
  auto cfg = t.instance;
  cfg.frames = 5;
  const auto report = verify_bound_empirically(make_verification_instance(cfg), t.filter);
  EXPECT_FALSE(report.conditions_met);
  EXPECT_FALSE(report.bound_holds);
  EXPECT_FALSE(report.unmet.empty());
  ASSERT_TRUE(report.kappa_max.has_value());
  EXPECT_GE(report.inputs.kappa, *report.kappa_max);
  const auto j = report_to_json(report);
  EXPECT_EQ(j["status"], "conditions unmet");
  EXPECT_FALSE(j["flags"]["kappa_admissible"].get<bool>());
  EXPECT_EQ(j["frames"].size(), 5u);
}

}  // namespace
