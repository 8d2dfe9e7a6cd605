#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dynfilt/errors.hpp"
#include "dynfilt/filters.hpp"
#include "dynfilt/metrics.hpp"
#include "dynfilt/rng.hpp"
#include "dynfilt/simulation.hpp"
#include "support.hpp"

using namespace dynfilt;
using dynfilt::testing::random_matrix;
using dynfilt::testing::random_sparse;
using dynfilt::testing::random_vector;

namespace {

const SolverSettings kTight{200000, 1e-14};

ScenarioConfig small_scenario(double p = 0.25, double noise = 0.001, int frames = 12) {
  ScenarioConfig cfg;
  cfg.grid_side = 8;
  cfg.num_targets = 3;
  cfg.change_prob = p;
  cfg.num_frames = frames;
  cfg.num_measurements = 24;
  cfg.noise_var = noise;
  cfg.seed = 17;
  return cfg;
}

TEST(BpdnStep, ZeroMeasurementsGiveZero) {
  Rng rng(1);
  const auto phi = gaussian_measurement(10, 20, rng);
  const auto r = bpdn_step({}, Vector::Zero(10), phi, LinearOperator::identity(20), 0.01);
  EXPECT_EQ(r.estimate, Vector::Zero(20));
}

TEST(BpdnStep, ExactRecoveryOfOneSparseSignal) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto phi = gaussian_measurement(10, 20, rng);
    const Vector x = random_sparse(20, 1, rng);
    const Vector y = phi.forward(x);
    const auto r = bpdn_step({}, y, phi, LinearOperator::identity(20), 1e-3, kTight);
    EXPECT_LT(rmse(x, r.estimate), 1e-3);
    Index truth = 0, found = 0;
    x.cwiseAbs().maxCoeff(&truth);
    r.estimate.cwiseAbs().maxCoeff(&found);
    EXPECT_EQ(truth, found);
    const std::vector<Index> support{truth};
    const Vector ls = oracle_ls_step(y, phi.matrix(), support);
    EXPECT_LT(rmse(ls, r.estimate), 1e-3);
  }
}

TEST(BpdnStep, StatelessAcrossCalls) {
  Rng rng(2);
  const auto phi = gaussian_measurement(12, 30, rng);
  const Vector y = random_vector(12, rng);
  const auto I = LinearOperator::identity(30);
  FilterState s;
  const auto a = bpdn_step(s, y, phi, I, 0.05);
  const auto b = bpdn_step(a.state, y, phi, I, 0.05);
  EXPECT_EQ(a.estimate, b.estimate);
}

TEST(IndependentFilters, InvariantToFrameOrder) {
  const auto scenario = generate_scenario(small_scenario());
  Rng rng(derive_seed(5, kMeasurementStream));
  const auto frames = measure_scenario(scenario, 24, 0.001, rng);
  const auto I = LinearOperator::identity(scenario.config.dimension());
  for (auto make : {+[](const LinearOperator& W) { return make_bpdn_filter(W, 0.00055); },
                    +[](const LinearOperator& W) { return make_rwl1_filter(W, Rwl1Config{}); }}) {
    auto forward = make(I);
    auto backward = make(I);
    const int T = scenario.num_frames();
    std::vector<Vector> fwd(T), bwd(T);
    for (int f = 0; f < T; ++f) {
      fwd[f] = forward->step({f, &frames[f].phi, &frames[f].y, scenario.supports[f]}).signal;
    }
    for (int f = T - 1; f >= 0; --f) {
      bwd[f] = backward->step({f, &frames[f].phi, &frames[f].y, scenario.supports[f]}).signal;
    }
    for (int f = 0; f < T; ++f) ASSERT_EQ(fwd[f], bwd[f]) << forward->id() << " frame " << f;
  }
}

TEST(Rwl1Weights, ZeroCoefficientsGiveCeiling) {
  const Vector w = rwl1_weights(Vector::Zero(5), 2.0, 0.01);
  for (Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w[i], 200.0);
}

TEST(Rwl1Weights, BoundedProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector z = random_vector(40, rng, 3.0);
    const Vector w = rwl1_weights(z, 2.0, 0.01);
    ASSERT_GT(w.minCoeff(), 0.0);
    ASSERT_LE(w.maxCoeff(), 2.0 / 0.01);
  }
}

TEST(Rwl1DfWeights, ZeroArgumentsGiveCeiling) {
  const Vector w = rwl1_df_weights(Vector::Zero(4), Vector::Zero(4), 1.0, 1.0, 0.975);
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w[i], 2.0 / 0.975);
}

TEST(Rwl1DfWeights, StrictlyDecreasingInPrediction) {
  Vector z = Vector::Zero(1);
  double last = std::numeric_limits<double>::infinity();
  for (double p = 0.0; p < 5.0; p += 0.25) {
    Vector pred(1);
    pred << (static_cast<int>(p * 4) % 2 ? -p : p);
    const double w = rwl1_df_weights(z, pred, 1.0, 1.0, 0.5)[0];
    EXPECT_LT(w, last);
    last = w;
  }
}

TEST(Rwl1DfWeights, BoundedProperty) {
  Rng rng(4);
  std::uniform_real_distribution<double> pos(0.05, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double tau = pos(rng), beta = pos(rng), eta = pos(rng);
    const Vector w = rwl1_df_weights(random_vector(30, rng, 2.0), random_vector(30, rng, 2.0), tau, beta, eta);
    ASSERT_GT(w.minCoeff(), 0.0);
    ASSERT_LE(w.maxCoeff(), 2.0 * tau / eta * (1.0 + 1e-15));
  }
}

TEST(Rwl1DfStep, WeightsStayInRangeOverAScenario) {
  const auto sc = generate_scenario(small_scenario());
  Rng rng(derive_seed(6, kMeasurementStream));
  const auto frames = measure_scenario(sc, 24, sc.config.noise_var, rng);
  const auto I = LinearOperator::identity(sc.config.dimension());
  const auto dyn = sc.dynamics();
  Rwl1DfConfig cfg;
  FilterState state;
  for (int f = 0; f < sc.num_frames(); ++f) {
    const auto r = rwl1_df_step(state, f, frames[f].y, frames[f].phi, I, dyn, cfg);
    ASSERT_GT(r.state.last_weights.minCoeff(), 0.0);
    ASSERT_LE(r.state.last_weights.maxCoeff(), 2.0 * cfg.tau / cfg.eta);
    ASSERT_GE(r.diagnostics.em_iterations, 1);
    ASSERT_LE(r.diagnostics.em_iterations, cfg.em_max_iters);
    for (double c : r.diagnostics.em_changes) ASSERT_TRUE(std::isfinite(c));
    state = r.state;
  }
}

TEST(Rwl1DfStep, ZeroPredictionReducesToRescaledRwl1) {
  // With a zero prediction, lambda0 * 2 tau / (beta |z| + eta) equals
  // lambda0' * beta' / (|z| + eta') for the settings below, including the uniform start.
  Rng rng(7);
  const auto phi = gaussian_measurement(20, 40, rng);
  const Vector y = phi.forward(random_sparse(40, 3, rng));
  const auto I = LinearOperator::identity(40);
  Rwl1DfConfig df;
  df.eta = 0.5;
  Rwl1Config st;
  st.lambda0 = df.lambda0 * 2.0 * df.tau / df.eta;
  st.beta = df.eta / df.beta;
  st.eta = df.eta / df.beta;
  const DynamicsModel zero_dyn([](const Vector& s, int) { return Vector::Zero(s.size()); });
  const auto a = rwl1_df_step({}, 1, y, phi, I, zero_dyn, df, kTight);
  const auto b = rwl1_step({}, y, phi, I, st, kTight);
  EXPECT_EQ(a.diagnostics.em_iterations, b.diagnostics.em_iterations);
  EXPECT_LE((a.estimate - b.estimate).norm(), 1e-8 * (1.0 + a.estimate.norm()));
}

TEST(BpdnDfStep, KappaZeroEqualsBpdn) {
  Rng rng(8);
  const auto phi = gaussian_measurement(12, 20, rng);
  const auto I = LinearOperator::identity(20);
  const auto dyn = DynamicsModel::identity();
  for (int trial = 0; trial < 5; ++trial) {
    const Vector y = phi.forward(random_sparse(20, 2, rng)) + random_vector(12, rng, 0.01);
    FilterState prev;
    prev.previous_estimate = trial == 0 ? Vector::Zero(20) : random_sparse(20, 3, rng);
    const auto df = bpdn_df_step(prev, 1, y, phi, I, dyn, 0.05, 0.0, kTight);
    const auto st = bpdn_step(prev, y, phi, I, 0.05, kTight);
    EXPECT_LE((df.estimate - st.estimate).norm(), 1e-8) << "trial " << trial;
  }
}

TEST(BpdnDfStep, PerfectModelErrorDecreases) {
  auto cfg = small_scenario(0.0, 0.0, 15);
  cfg.num_measurements = 12;
  const auto sc = generate_scenario(cfg);
  Rng rng(derive_seed(9, kMeasurementStream));
  const auto frames = measure_scenario(sc, cfg.num_measurements, 0.0, rng);
  auto filter = make_bpdn_df_filter(LinearOperator::identity(cfg.dimension()), sc.dynamics(), 1e-4, 1.0, kTight);
  std::vector<double> errs;
  for (int f = 0; f < sc.num_frames(); ++f) {
    errs.push_back(rmse(sc.states[f], filter->step({f, &frames[f].phi, &frames[f].y, {}}).signal));
  }
  for (std::size_t f = 1; f < errs.size(); ++f) EXPECT_LE(errs[f], errs[f - 1] + 1e-9) << "frame " << f;
  EXPECT_LT(errs.back(), 0.1 * errs.front());
}

TEST(KalmanStep, ScalarHandExample) {
  KalmanState s{Vector::Zero(1), Matrix::Ones(1, 1), Matrix::Zero(1, 1), Matrix::Ones(1, 1)};
  Vector y(1);
  y << 2.0;
  const auto r = kalman_step(s, y, Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  EXPECT_NEAR(r.estimate[0], 1.0, 1e-12);
  EXPECT_NEAR(r.state.covariance(0, 0), 0.5, 1e-12);
}

// Minimizer of (y - Phi x)^T R^{-1} (y - Phi x) + (x - F m)^T (F P F^T + Q)^{-1} (x - F m).
Vector map_oracle(const KalmanState& s, const Vector& y, const Matrix& phi, const Matrix& F) {
  const Matrix prior_cov = F * s.covariance * F.transpose() + s.process_noise;
  const Matrix prior_info = prior_cov.inverse();
  const Matrix r_inv = s.measurement_noise.inverse();
  const Matrix H = phi.transpose() * r_inv * phi + prior_info;
  const Vector g = phi.transpose() * r_inv * y + prior_info * (F * s.mean);
  return H.ldlt().solve(g);
}

Matrix random_spd(Index n, Rng& rng, double floor) {
  const Matrix a = random_matrix(n, n, rng);
  return a * a.transpose() / static_cast<double>(n) + floor * Matrix::Identity(n, n);
}

TEST(KalmanStep, MatchesDenseMapOracle) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = trial < 10 ? 5 : 1;
    const Index m = trial < 10 ? 4 : 1;
    KalmanState s{random_vector(n, rng), random_spd(n, rng, 0.2), random_spd(n, rng, 0.1), random_spd(m, rng, 0.3)};
    const Matrix phi = random_matrix(m, n, rng);
    const Matrix F = random_matrix(n, n, rng) / std::sqrt(static_cast<double>(n));
    const Vector y = random_vector(m, rng);
    const auto r = kalman_step(s, y, phi, F);
    EXPECT_LE((r.estimate - map_oracle(s, y, phi, F)).norm(), 1e-8) << "trial " << trial;
    EXPECT_LE((r.state.covariance - r.state.covariance.transpose()).norm(), 1e-10);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(r.state.covariance);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(KalmanStep, PerfectMeasurementLimit) {
  Rng rng(11);
  KalmanState s{random_vector(4, rng), Matrix::Identity(4, 4), Matrix::Identity(4, 4) * 0.1, Matrix::Identity(4, 4) * 1e-12};
  const Vector y = random_vector(4, rng);
  const auto r = kalman_step(s, y, Matrix::Identity(4, 4), Matrix::Identity(4, 4));
  EXPECT_LE((r.estimate - y).norm(), 1e-9);
}

TEST(KalmanStep, StaticTruthMatchesRecursiveLeastSquares) {
  Rng rng(12);
  const Index n = 3;
  const double sigma2 = 0.01;
  const Vector truth = random_vector(n, rng);
  KalmanState s{Vector::Zero(n), Matrix::Identity(n, n), Matrix::Zero(n, n), sigma2 * Matrix::Identity(2, 2)};
  Matrix info = Matrix::Identity(n, n);
  Vector rhs = Vector::Zero(n);
  for (int f = 0; f < 200; ++f) {
    const Matrix phi = random_matrix(2, n, rng);
    const Vector y = phi * truth + random_vector(2, rng, std::sqrt(sigma2));
    s = kalman_step(s, y, phi, Matrix::Identity(n, n)).state;
    info += phi.transpose() * phi / sigma2;
    rhs += phi.transpose() * y / sigma2;
  }
  EXPECT_LE((s.mean - info.ldlt().solve(rhs)).norm(), 1e-8);
  EXPECT_LE((s.mean - truth).norm(), 0.05);
}

TEST(KalmanStep, SingularInnovationCovarianceThrows) {
  KalmanState s{Vector::Zero(2), Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(1, 1)};
  EXPECT_THROW(kalman_step(s, Vector::Ones(1), Matrix::Ones(1, 2), Matrix::Identity(2, 2)), NumericalError);
}

TEST(OracleLs, ExactOnNoiselessData) {
  Rng rng(13);
  const Matrix phi = random_matrix(15, 30, rng);
  const Vector x = random_sparse(30, 5, rng);
  std::vector<Index> support;
  for (Index i = 0; i < 30; ++i) {
    if (x[i] != 0.0) support.push_back(i);
  }
  EXPECT_LE((oracle_ls_step(phi * x, phi, support) - x).norm(), 1e-10);
  EXPECT_EQ(oracle_ls_step(phi * x, phi, {}), Vector::Zero(30));
}

TEST(OracleLs, RankDeficientSupportThrows) {
  Matrix phi = Matrix::Zero(3, 4);
  phi(0, 0) = 1.0;
  phi(1, 1) = 1.0;
  const std::vector<Index> support{0, 2};
  EXPECT_THROW(oracle_ls_step(Vector::Ones(3), phi, support), NumericalError);
}

TEST(Streaming, CausalPrefixTruncation) {
  const auto sc = generate_scenario(small_scenario());
  Rng rng(derive_seed(14, kMeasurementStream));
  const auto frames = measure_scenario(sc, 24, sc.config.noise_var, rng);
  const auto I = LinearOperator::identity(sc.config.dimension());
  const auto dyn = sc.dynamics();
  auto run = [&](std::unique_ptr<Filter> filter, int count) {
    std::vector<Vector> out;
    for (int f = 0; f < count; ++f) out.push_back(filter->step({f, &frames[f].phi, &frames[f].y, sc.supports[f]}).signal);
    return out;
  };
  const int T = sc.num_frames();
  const int prefix = T / 2;
  const auto full_df = run(make_rwl1_df_filter(I, dyn, Rwl1DfConfig{}), T);
  const auto part_df = run(make_rwl1_df_filter(I, dyn, Rwl1DfConfig{}), prefix);
  const auto full_b = run(make_bpdn_df_filter(I, dyn, 0.0005, 0.0006), T);
  const auto part_b = run(make_bpdn_df_filter(I, dyn, 0.0005, 0.0006), prefix);
  for (int f = 0; f < prefix; ++f) {
    ASSERT_EQ(full_df[f], part_df[f]);
    ASSERT_EQ(full_b[f], part_b[f]);
  }
}

TEST(Streaming, ResetRestoresInitialState) {
  const auto sc = generate_scenario(small_scenario());
  Rng rng(derive_seed(15, kMeasurementStream));
  const auto frames = measure_scenario(sc, 24, sc.config.noise_var, rng);
  auto filter = make_rwl1_df_filter(LinearOperator::identity(sc.config.dimension()), sc.dynamics(), Rwl1DfConfig{});
  std::vector<Vector> first;
  for (int f = 0; f < 4; ++f) first.push_back(filter->step({f, &frames[f].phi, &frames[f].y, {}}).signal);
  filter->reset();
  for (int f = 0; f < 4; ++f) ASSERT_EQ(filter->step({f, &frames[f].phi, &frames[f].y, {}}).signal, first[f]);
}

TEST(Streaming, KalmanAndOracleRunOnScenario) {
  const auto sc = generate_scenario(small_scenario(0.25, 0.001, 6));
  Rng rng(derive_seed(16, kMeasurementStream));
  const auto frames = measure_scenario(sc, 24, sc.config.noise_var, rng);
  auto kalman = make_kalman_filter(sc.config.dimension(), sc.dynamics(), 0.01, sc.config.noise_var);
  auto oracle = make_oracle_filter();
  EXPECT_EQ(kalman->id(), "kalman");
  EXPECT_EQ(oracle->id(), "oracle");
  for (int f = 0; f < sc.num_frames(); ++f) {
    const FrameInput in{f, &frames[f].phi, &frames[f].y, sc.supports[f]};
    EXPECT_TRUE(kalman->step(in).signal.allFinite());
    EXPECT_LT(rmse(sc.states[f], oracle->step(in).signal), 0.01);
  }
}

TEST(FilterConfigs, RejectNonPositiveParameters) {
  Rwl1DfConfig df;
  df.eta = 1.0 - 2.0 * 12.0 / 20.0;
  EXPECT_THROW(df.validate(), ArgumentError);
  Rwl1Config st;
  st.beta = 0.0;
  EXPECT_THROW(st.validate(), ArgumentError);
  EXPECT_THROW(make_bpdn_df_filter(LinearOperator::identity(3), DynamicsModel::identity(), 1.0, -1.0), ArgumentError);
}

}  // namespace
