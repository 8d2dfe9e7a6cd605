#include "dynfilt/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dynfilt/errors.hpp"
#include "dynfilt/rng.hpp"

namespace dynfilt {

namespace {

// The eight unit moves of {-1,0,1}^2 \ {(0,0)} in rotational order.
constexpr std::array<GridVelocity, 8> kDirections{{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

constexpr int kMaxRedraws = 16;

int direction_index(const GridVelocity& v) {
  for (int i = 0; i < 8; ++i) {
    if (kDirections[static_cast<std::size_t>(i)] == v) return i;
  }
  return 0;
}

class Torus {
 public:
  explicit Torus(int side) : side_(side) {}

  Index step(Index cell, const GridVelocity& v) const {
    const int row = static_cast<int>(cell / side_);
    const int col = static_cast<int>(cell % side_);
    const int r = ((row + v.drow) % side_ + side_) % side_;
    const int c = ((col + v.dcol) % side_ + side_) % side_;
    return static_cast<Index>(r) * side_ + c;
  }

  Index cells() const { return static_cast<Index>(side_) * side_; }

 private:
  int side_;
};

// First free cell in raster order starting at `start`. The caller guarantees one exists.
Index first_free(const std::vector<char>& taken, Index start) {
  const Index n = static_cast<Index>(taken.size());
  for (Index k = 0; k < n; ++k) {
    const Index c = (start + k) % n;
    if (!taken[static_cast<std::size_t>(c)]) return c;
  }
  throw CapacityError("no free grid cell");
}

Vector render(const std::vector<TargetState>& targets, Index n) {
  Vector x = Vector::Zero(n);
  for (const auto& t : targets) x[t.cell] = t.amplitude;
  return x;
}

std::vector<Index> support_of(const std::vector<TargetState>& targets) {
  std::vector<Index> s;
  s.reserve(targets.size());
  for (const auto& t : targets) s.push_back(t.cell);
  std::sort(s.begin(), s.end());
  return s;
}

Vector apply_moves(const std::vector<CellMove>& moves, const Vector& x) {
  Vector out = Vector::Zero(x.size());
  for (const auto& m : moves) out[m.to] = x[m.from];
  return out;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (grid_side < 1) throw ArgumentError("grid_side must be >= 1");
  if (num_targets < 1) throw ArgumentError("num_targets (S) must be >= 1");
  if (static_cast<Index>(num_targets) > dimension()) {
    throw CapacityError("num_targets (S = " + std::to_string(num_targets) +
                        ") exceeds the number of pixels N = " + std::to_string(dimension()));
  }
  if (!(change_prob >= 0.0 && change_prob <= 0.5)) throw ArgumentError("change_prob must lie in [0, 0.5]");
  if (num_frames < 1) throw ArgumentError("num_frames must be >= 1");
  if (num_measurements < 1 || static_cast<Index>(num_measurements) > dimension()) {
    throw ArgumentError("num_measurements must lie in [1, N]");
  }
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) throw ArgumentError("noise_var must be >= 0");
  if (!(amplitude_min > 0.0 && amplitude_max >= amplitude_min && std::isfinite(amplitude_max))) {
    throw ArgumentError("amplitude range must satisfy 0 < min <= max");
  }
}

TrackingScenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const Torus grid(cfg.grid_side);
  const Index n = grid.cells();
  const auto num_targets = static_cast<std::size_t>(cfg.num_targets);
  Rng rng(derive_seed(cfg.seed, kScenarioStream));
  std::uniform_real_distribution<double> amplitude(cfg.amplitude_min, cfg.amplitude_max);
  std::uniform_int_distribution<int> any_direction(0, 7);
  std::uniform_int_distribution<int> other_direction(1, 7);
  std::bernoulli_distribution changes(cfg.change_prob);

  // Distinct starting cells via a partial Fisher-Yates shuffle.
  std::vector<Index> cells(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) cells[static_cast<std::size_t>(i)] = i;
  std::vector<TargetState> targets(num_targets);
  for (std::size_t k = 0; k < num_targets; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, cells.size() - 1);
    std::swap(cells[k], cells[pick(rng)]);
    targets[k].cell = cells[k];
    targets[k].velocity = kDirections[static_cast<std::size_t>(any_direction(rng))];
    targets[k].amplitude = amplitude(rng);
  }

  TrackingScenario out;
  out.config = cfg;
  out.targets.push_back(targets);
  out.states.push_back(render(targets, n));
  out.supports.push_back(support_of(targets));
  out.direction_changes.push_back(0);

  std::vector<char> planned_taken(static_cast<std::size_t>(n));
  std::vector<char> taken(static_cast<std::size_t>(n));
  for (int frame = 1; frame < cfg.num_frames; ++frame) {
    // Model destinations: constant motion, with collisions between model moves
    // deflected deterministically (rotate through the directions) so the known map
    // stays injective.
    std::fill(planned_taken.begin(), planned_taken.end(), 0);
    std::vector<GridVelocity> planned_velocity(num_targets);
    std::vector<Index> planned_cell(num_targets);
    for (std::size_t k = 0; k < num_targets; ++k) {
      const int start = direction_index(targets[k].velocity);
      Index dest = -1;
      for (int r = 0; r < 8 && dest < 0; ++r) {
        const auto v = kDirections[static_cast<std::size_t>((start + r) % 8)];
        const Index c = grid.step(targets[k].cell, v);
        if (!planned_taken[static_cast<std::size_t>(c)]) {
          dest = c;
          planned_velocity[k] = v;
        }
      }
      if (dest < 0) {
        dest = first_free(planned_taken, targets[k].cell);
        planned_velocity[k] = targets[k].velocity;
      }
      planned_taken[static_cast<std::size_t>(dest)] = 1;
      planned_cell[k] = dest;
    }

    std::vector<char> changed(num_targets);
    for (std::size_t k = 0; k < num_targets; ++k) changed[k] = changes(rng) ? 1 : 0;

    // Unchanged targets follow the model; changed targets pick a new direction and
    // yield to every cell already claimed.
    std::fill(taken.begin(), taken.end(), 0);
    for (std::size_t k = 0; k < num_targets; ++k) {
      if (!changed[k]) taken[static_cast<std::size_t>(planned_cell[k])] = 1;
    }
    std::vector<TargetState> next = targets;
    int num_changed = 0;
    for (std::size_t k = 0; k < num_targets; ++k) {
      if (!changed[k]) {
        next[k].cell = planned_cell[k];
        next[k].velocity = planned_velocity[k];
        continue;
      }
      ++num_changed;
      const int base = direction_index(planned_velocity[k]);
      GridVelocity v{};
      Index dest = -1;
      for (int attempt = 0; attempt < kMaxRedraws && dest < 0; ++attempt) {
        v = kDirections[static_cast<std::size_t>((base + other_direction(rng)) % 8)];
        const Index c = grid.step(targets[k].cell, v);
        if (!taken[static_cast<std::size_t>(c)]) dest = c;
      }
      if (dest < 0) {
        // Stay put for one frame, or take the nearest free cell if even that is claimed.
        dest = taken[static_cast<std::size_t>(targets[k].cell)] ? first_free(taken, targets[k].cell)
                                                                 : targets[k].cell;
      }
      taken[static_cast<std::size_t>(dest)] = 1;
      next[k].cell = dest;
      next[k].velocity = v;
    }

    std::vector<CellMove> moves(num_targets);
    for (std::size_t k = 0; k < num_targets; ++k) moves[k] = {targets[k].cell, planned_cell[k]};

    targets = std::move(next);
    Vector state = render(targets, n);
    out.innovations.push_back(state - apply_moves(moves, out.states.back()));
    out.states.push_back(std::move(state));
    out.supports.push_back(support_of(targets));
    out.targets.push_back(targets);
    out.transitions.push_back(std::move(moves));
    out.direction_changes.push_back(num_changed);
  }
  return out;
}

Vector TrackingScenario::propagate(const Vector& state, int frame) const {
  if (state.size() != config.dimension()) throw DimensionError("propagate: state length != N");
  if (frame < 1 || frame > static_cast<int>(transitions.size())) return Vector::Zero(state.size());
  return apply_moves(transitions[static_cast<std::size_t>(frame - 1)], state);
}

DynamicsModel TrackingScenario::dynamics() const {
  auto moves = std::make_shared<const std::vector<std::vector<CellMove>>>(transitions);
  const Index n = config.dimension();
  auto apply = [moves, n](const Vector& x, int frame) -> Vector {
    if (x.size() != n) throw DimensionError("scenario dynamics: state length != N");
    if (frame < 1 || frame > static_cast<int>(moves->size())) return Vector::Zero(n);
    return apply_moves((*moves)[static_cast<std::size_t>(frame - 1)], x);
  };
  auto matrix = [moves, n](int frame) -> Matrix {
    Matrix F = Matrix::Zero(n, n);
    if (frame >= 1 && frame <= static_cast<int>(moves->size())) {
      for (const auto& m : (*moves)[static_cast<std::size_t>(frame - 1)]) F(m.to, m.from) = 1.0;
    }
    return F;
  };
  // Injective moves with unit gain: a partial permutation, so f* = 1.
  return DynamicsModel(std::move(apply), 1.0, std::move(matrix));
}

Vector measure_frame(const Vector& x, const LinearOperator& phi, double noise_var, Rng& rng) {
  if (x.size() != phi.cols()) throw DimensionError("measure_frame: x length != Phi.cols");
  if (!(noise_var >= 0.0)) throw ArgumentError("measure_frame: noise_var must be >= 0");
  Vector y = phi.forward(x);
  if (noise_var > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(noise_var));
    for (Index i = 0; i < y.size(); ++i) y[i] += noise(rng);
  }
  return y;
}

std::vector<MeasuredFrame> measure_scenario(const TrackingScenario& scenario, Index num_measurements,
                                            double noise_var, Rng& rng, bool fixed_operator) {
  const Index n = scenario.config.dimension();
  std::vector<MeasuredFrame> frames;
  frames.reserve(scenario.states.size());
  for (const auto& x : scenario.states) {
    LinearOperator phi = (fixed_operator && !frames.empty())
                             ? frames.front().phi
                             : gaussian_measurement(num_measurements, n, rng);
    Vector y = measure_frame(x, phi, noise_var, rng);
    frames.push_back({std::move(phi), std::move(y)});
  }
  return frames;
}

void to_json(nlohmann::json& j, const ScenarioConfig& cfg) {
  j = nlohmann::json{{"grid_side", cfg.grid_side},
                     {"S", cfg.num_targets},
                     {"p", cfg.change_prob},
                     {"T", cfg.num_frames},
                     {"M", cfg.num_measurements},
                     {"sigma2", cfg.noise_var},
                     {"amplitude_range", {cfg.amplitude_min, cfg.amplitude_max}},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, ScenarioConfig& cfg) {
  cfg.grid_side = j.value("grid_side", cfg.grid_side);
  cfg.num_targets = j.value("S", cfg.num_targets);
  cfg.change_prob = j.value("p", cfg.change_prob);
  cfg.num_frames = j.value("T", cfg.num_frames);
  cfg.num_measurements = j.value("M", cfg.num_measurements);
  cfg.noise_var = j.value("sigma2", cfg.noise_var);
  if (j.contains("amplitude_range")) {
    const auto& r = j.at("amplitude_range");
    if (!r.is_array() || r.size() != 2) throw ArgumentError("amplitude_range must be [min, max]");
    cfg.amplitude_min = r[0].get<double>();
    cfg.amplitude_max = r[1].get<double>();
  }
  cfg.seed = j.value("seed", cfg.seed);
}

nlohmann::json scenario_to_json(const TrackingScenario& scenario) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f = 0; f < scenario.states.size(); ++f) {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : scenario.targets[f]) {
      targets.push_back({{"cell", t.cell},
                         {"velocity", {t.velocity.drow, t.velocity.dcol}},
                         {"amplitude", t.amplitude}});
    }
    nlohmann::json frame{{"targets", std::move(targets)},
                         {"direction_changes", scenario.direction_changes[f]}};
    if (f > 0) {
      nlohmann::json moves = nlohmann::json::array();
      for (const auto& m : scenario.transitions[f - 1]) moves.push_back({m.from, m.to});
      frame["transition"] = std::move(moves);
    }
    frames.push_back(std::move(frame));
  }
  return {{"format", "dynfilt-scenario/1"}, {"config", scenario.config}, {"frames", std::move(frames)}};
}

TrackingScenario scenario_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "dynfilt-scenario/1") {
    throw ArgumentError("not a dynfilt scenario archive");
  }
  TrackingScenario out;
  out.config = j.at("config").get<ScenarioConfig>();
  const Index n = out.config.dimension();
  for (const auto& frame : j.at("frames")) {
    std::vector<TargetState> targets;
    for (const auto& t : frame.at("targets")) {
      TargetState s;
      s.cell = t.at("cell").get<Index>();
      s.velocity = {t.at("velocity")[0].get<int>(), t.at("velocity")[1].get<int>()};
      s.amplitude = t.at("amplitude").get<double>();
      if (s.cell < 0 || s.cell >= n) throw ArgumentError("scenario archive: cell out of range");
      targets.push_back(s);
    }
    if (frame.contains("transition")) {
      std::vector<CellMove> moves;
      for (const auto& m : frame.at("transition")) moves.push_back({m[0].get<Index>(), m[1].get<Index>()});
      out.transitions.push_back(std::move(moves));
    }
    out.direction_changes.push_back(frame.value("direction_changes", 0));
    out.states.push_back(render(targets, n));
    out.supports.push_back(support_of(targets));
    out.targets.push_back(std::move(targets));
  }
  if (out.transitions.size() + 1 != out.states.size()) {
    throw ArgumentError("scenario archive: every frame after the first needs a transition");
  }
  for (std::size_t f = 1; f < out.states.size(); ++f) {
    out.innovations.push_back(out.states[f] - apply_moves(out.transitions[f - 1], out.states[f - 1]));
  }
  return out;
}

}  // namespace dynfilt
