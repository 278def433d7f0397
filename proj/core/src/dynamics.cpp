#include "rfslam/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfslam/grid_io.hpp"

namespace rfslam {

AgentState sample_agent_transition(const AgentState& x, const MotionNoise& noise,
                                   Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double dt = noise.dT;
  AgentState out;
  const Vec2 a(noise.sigma_nu * n01(rng), noise.sigma_nu * n01(rng));
  out.p = x.p + dt * x.v + 0.5 * dt * dt * a;
  out.v = x.v + dt * a;
  out.dphi = wrap_angle(x.dphi + noise.sigma_phi * n01(rng));
  return out;
}

void propagate_agents(AgentParticles& particles, const MotionNoise& noise,
                      Rng& rng) {
  for (AgentState& x : particles.x) x = sample_agent_transition(x, noise, rng);
}

PsfvBelief transition_psfv_time(const PsfvBelief& y, const MotionNoise& noise,
                                Rng& rng, double rho_lo, double rho_hi) {
  PsfvBelief out = y;
  out.r_prob = noise.p_s * y.r_prob;
  if (noise.sigma_p > 0.0 || noise.sigma_rho > 0.0) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.pos[i].x() += noise.sigma_p * n01(rng);
      out.pos[i].y() += noise.sigma_p * n01(rng);
      out.rho[i] = std::clamp(out.rho[i] + noise.sigma_rho * n01(rng), rho_lo, rho_hi);
    }
  }
  return out;
}

AgentParticles init_agent_particles(const AgentState& center, std::size_t n,
                                    const AgentPrior& prior, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AgentParticles out;
  out.x.resize(n);
  out.w.assign(n, 1.0 / static_cast<double>(n));
  for (AgentState& x : out.x) {
    x.p = center.p + prior.position_halfwidth * Vec2(u(rng), u(rng));
    x.v = center.v + prior.velocity_halfwidth * Vec2(u(rng), u(rng));
    x.dphi = wrap_angle(center.dphi + prior.orientation_halfwidth * u(rng));
  }
  return out;
}

OccupancyGrid init_grid_prior(const GridSpec& spec,
                              const std::optional<std::filesystem::path>& file) {
  if (file) return read_occupancy_csv(spec, *file);
  return OccupancyGrid(spec, 0.5);
}

AgentState mmse_estimate(const AgentParticles& particles) {
  AgentState m;
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const double w = particles.w[i];
    m.p += w * particles.x[i].p;
    m.v += w * particles.x[i].v;
    s += w * std::sin(particles.x[i].dphi);
    c += w * std::cos(particles.x[i].dphi);
  }
  m.dphi = std::atan2(s, c);
  return m;
}

PsfvEstimate mmse_estimate(const PsfvBelief& y) {
  PsfvEstimate e;
  e.id = y.id;
  e.r_prob = y.r_prob;
  for (std::size_t i = 0; i < y.size(); ++i) {
    e.pos += y.w[i] * y.pos[i];
    e.rho += y.w[i] * y.rho[i];
  }
  return e;
}

double normalize_weights(std::span<double> w) {
  double s = 0.0;
  for (double v : w) s += v;
  if (!(s > 0.0) || !std::isfinite(s)) {
    const double u = w.empty() ? 0.0 : 1.0 / static_cast<double>(w.size());
    std::fill(w.begin(), w.end(), u);
    return 0.0;
  }
  for (double& v : w) v /= s;
  return s;
}

double normalize_log_weights(std::span<double> logw) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logw) m = std::max(m, v);
  if (!std::isfinite(m)) {
    const double u = logw.empty() ? 0.0 : 1.0 / static_cast<double>(logw.size());
    std::fill(logw.begin(), logw.end(), u);
    return m;
  }
  double s = 0.0;
  for (double& v : logw) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : logw) v /= s;
  return m + std::log(s);
}

double effective_sample_size(std::span<const double> w) {
  double s2 = 0.0;
  for (double v : w) s2 += v * v;
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

std::vector<std::size_t> systematic_resample(std::span<const double> w,
                                             std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  if (w.empty() || n == 0) return {};
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double step = 1.0 / static_cast<double>(n);
  double u = u01(rng) * step;
  double c = w[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (u > c && j + 1 < w.size()) c += w[++j];
    idx[i] = j;
    u += step;
  }
  return idx;
}

}  // namespace rfslam
