#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/grid_map.hpp"

namespace rfslam {

using Rng = std::mt19937_64;

struct AgentState {
  Vec2 p = Vec2::Zero();
  Vec2 v = Vec2::Zero();
  double dphi = 0.0;
};

struct MotionNoise {
  double sigma_nu = 9e-4;          ///< acceleration std (m/s^2)
  double sigma_phi = deg2rad(2.0); ///< orientation std per step (rad)
  double sigma_p = 0.01;           ///< SFV vertex regularization std (m)
  double sigma_rho = 0.01;
  double p_s = 0.99;
  double dT = 1.0;
};

struct AgentParticles {
  std::vector<AgentState> x;
  std::vector<double> w;

  std::size_t size() const { return x.size(); }
};

/// Particle belief of one potential surface feature. Positions are vertices
/// in the filter's VertexFrame.
struct PsfvBelief {
  std::uint64_t id = 0;
  std::vector<Vec2> pos;
  std::vector<double> rho;
  std::vector<double> w;
  double r_prob = 0.0;

  std::size_t size() const { return pos.size(); }
};

/// Near-constant-velocity step: p' = p + v dT + dT^2/2 a, v' = v + dT a with
/// a ~ N(0, sigma_nu^2 I); orientation random walk.
AgentState sample_agent_transition(const AgentState& x, const MotionNoise& noise,
                                   Rng& rng);
void propagate_agents(AgentParticles& particles, const MotionNoise& noise,
                      Rng& rng);

/// Survival thinning of the existence probability plus vertex and
/// reflection-coefficient jitter (rho clamped to [rho_lo, rho_hi]).
PsfvBelief transition_psfv_time(const PsfvBelief& y, const MotionNoise& noise,
                                Rng& rng, double rho_lo = 0.0, double rho_hi = 1.0);
/// Across-PA kernel: identity.
inline PsfvBelief transition_psfv_pa(const PsfvBelief& y) { return y; }

struct AgentPrior {
  double position_halfwidth = 0.5;
  double velocity_halfwidth = 0.01;
  double orientation_halfwidth = deg2rad(5.0);
};

/// Uniform particles in a box around `center`, equal weights.
AgentParticles init_agent_particles(const AgentState& center, std::size_t n,
                                    const AgentPrior& prior, Rng& rng);

/// Uniform 0.5 prior, or the contents of a prior-map CSV.
OccupancyGrid init_grid_prior(const GridSpec& spec,
                              const std::optional<std::filesystem::path>& file);

AgentState mmse_estimate(const AgentParticles& particles);

struct PsfvEstimate {
  std::uint64_t id = 0;
  Vec2 pos = Vec2::Zero();
  double rho = 0.0;
  double r_prob = 0.0;
};
PsfvEstimate mmse_estimate(const PsfvBelief& y);

/// Normalizes in place; returns the sum before normalization. A zero or
/// non-finite sum resets to uniform weights and returns 0.
double normalize_weights(std::span<double> w);
/// Converts log-weights to normalized weights in place; returns log of the sum.
double normalize_log_weights(std::span<double> logw);
double effective_sample_size(std::span<const double> w);
/// Systematic resampling; returns ancestor indices in increasing order.
std::vector<std::size_t> systematic_resample(std::span<const double> w,
                                             std::size_t n, Rng& rng);

}  // namespace rfslam
