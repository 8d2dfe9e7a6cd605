#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynfilt/dynamics.hpp"
#include "dynfilt/operators.hpp"

namespace dynfilt {

struct ScenarioConfig {
  int grid_side = 24;  // N = grid_side^2 pixels
  int num_targets = 20;
  double change_prob = 0.25;  // per-target direction-change probability p
  int num_frames = 100;
  int num_measurements = 80;
  double noise_var = 0.001;
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  std::uint64_t seed = 0;

  Index dimension() const { return static_cast<Index>(grid_side) * grid_side; }
  // Throws ArgumentError / CapacityError.
  void validate() const;
};

struct GridVelocity {
  int drow = 0;
  int dcol = 0;
  friend bool operator==(const GridVelocity&, const GridVelocity&) = default;
};

struct TargetState {
  Index cell = 0;
  GridVelocity velocity;
  double amplitude = 0.0;
};

// One source -> destination pixel move of the constant-motion map.
struct CellMove {
  Index from = 0;
  Index to = 0;
};

// Ground truth of the moving-target scenario.
//
// Frame indices run 0..T-1. transitions[n - 1] is the known map F_n used to
// predict frame n from frame n - 1, and innovations[n - 1] = x_n - F_n(x_{n-1}).
struct TrackingScenario {
  ScenarioConfig config;
  std::vector<Vector> states;
  std::vector<Vector> innovations;
  std::vector<std::vector<Index>> supports;  // sorted nonzero cells per frame
  std::vector<std::vector<TargetState>> targets;
  std::vector<std::vector<CellMove>> transitions;
  std::vector<int> direction_changes;  // per frame, 0 for frame 0

  int num_frames() const { return static_cast<int>(states.size()); }
  // F_n for frames 1..T-1; frame 0 (and anything outside the record) maps to zero.
  DynamicsModel dynamics() const;
  // Applies F_frame to a state.
  Vector propagate(const Vector& state, int frame) const;
};

TrackingScenario generate_scenario(const ScenarioConfig& cfg);

// y = Phi x + eps, eps ~ N(0, noise_var I).
Vector measure_frame(const Vector& x, const LinearOperator& phi, double noise_var, Rng& rng);

struct MeasuredFrame {
  LinearOperator phi;
  Vector y;
};

// Draws Phi_n (fresh per frame unless fixed_operator) and y_n for every frame of
// the scenario. Deterministic given rng state.
std::vector<MeasuredFrame> measure_scenario(const TrackingScenario& scenario, Index num_measurements,
                                            double noise_var, Rng& rng, bool fixed_operator = false);

void to_json(nlohmann::json& j, const ScenarioConfig& cfg);
void from_json(const nlohmann::json& j, ScenarioConfig& cfg);

// Exact-replay archive: config, per-frame targets and transitions, sparse states.
nlohmann::json scenario_to_json(const TrackingScenario& scenario);
TrackingScenario scenario_from_json(const nlohmann::json& j);

}  // namespace dynfilt
