#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "rfslam/dynamics.hpp"
#include "rfslam/inference.hpp"
#include "rfslam/propagation.hpp"

namespace rfslam {

struct Wall {
  Segment segment;
  double rho = 0.5;
};

struct EnvironmentSpec {
  std::vector<Wall> surfaces;
  std::vector<PhysicalAnchor> pas;
  Vec2 roi_min = Vec2::Zero();
  Vec2 roi_max = Vec2::Constant(5.0);

  /// Throws ConfigError for degenerate walls, rho outside [0, 1] or an empty
  /// region of interest.
  void validate() const;
};

/// Reads `{surfaces: [{p1, p2, rho}], pas: [{id, pos}], roi: {min, max}}`.
EnvironmentSpec load_environment(const std::filesystem::path& file);
void save_environment(const EnvironmentSpec& env, const std::filesystem::path& file);

struct ScenarioConfig {
  double snr_1m_db = 30.0;
  double u_de_db = 6.0;
  double mu_fa = 1.0;
  double mu_n = 0.05;
  double max_distance = 30.0;
  int n_steps = 80;
  double step_size = 0.05;
  double dT = 1.0;
  std::uint64_t seed = 1;
  std::vector<Vec2> waypoints;
  double orientation = 0.0;        ///< array orientation at step 0 (rad)
  double orientation_drift = 0.0;  ///< per step (rad)
};

/// States spaced `step_size` apart along the waypoint polyline, starting at
/// the first waypoint and ending at the last. Velocity is the backward
/// difference over dT (the first state copies the second). Throws ConfigError
/// for fewer than two waypoints or a waypoint outside [roi_min, roi_max].
std::vector<AgentState> generate_trajectory(const ScenarioConfig& cfg,
                                            const Vec2& roi_min,
                                            const Vec2& roi_max);

struct TruePath {
  PathGeometry geometry;
  double beta = 1.0;
  std::array<int, 2> surfaces{-1, -1};  ///< wall indices in bounce order
};

/// LOS, single- and ordered double-bounce paths that hit their finite walls
/// and are not occluded by any other wall.
std::vector<TruePath> enumerate_true_paths(const EnvironmentSpec& env,
                                           const AgentState& agent,
                                           const Vec2& pa);

struct SynthesisOptions {
  bool noiseless = false;      ///< exact d/angles, z_u = max(u, u_de)
  bool force_detection = false;
  bool false_alarms = true;
};

/// Noisy detections of the true paths plus Poisson false alarms, in random
/// order. The amplitude is a Rice draw; a path is detected when it exceeds
/// u_de, which happens with probability p_d(u).
std::vector<Measurement> synthesize_measurements(
    const EnvironmentSpec& env, const AgentState& agent, const Vec2& pa,
    const RadioConstants& radio, const ClutterModel& clutter, Rng& rng,
    const SynthesisOptions& opts = {});

/// Same, for an already enumerated path list.
std::vector<Measurement> synthesize_measurements(
    std::span<const TruePath> paths, const RadioConstants& radio,
    const ClutterModel& clutter, Rng& rng, const SynthesisOptions& opts = {});

/// One false alarm drawn from the clutter density.
Measurement sample_false_alarm(const ClutterModel& clutter, Rng& rng);

}  // namespace rfslam
