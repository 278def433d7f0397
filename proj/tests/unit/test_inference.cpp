#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfslam/inference.hpp"

using namespace rfslam;

namespace {

FilterConfig small_config(std::size_t n) {
  FilterConfig cfg;
  cfg.num_particles = n;
  cfg.grid.cell_size = 0.25;
  cfg.grid.nx = 20;
  cfg.grid.ny = 20;
  cfg.clutter.u_de = amplitude_from_db(6.0);
  return cfg;
}

AgentState agent_at(Vec2 p) {
  AgentState a;
  a.p = p;
  return a;
}

// Filter whose agent particles all sit on `p` with equal weight.
Filter pinned_filter(FilterConfig cfg, Vec2 p, Rng& rng) {
  Filter f(cfg, {{1, {1.0, 1.0}}});
  AgentPrior tight;
  tight.position_halfwidth = 0.0;
  tight.velocity_halfwidth = 0.0;
  tight.orientation_halfwidth = 0.0;
  f.initialize(agent_at(p), tight, OccupancyGrid(cfg.grid, 0.5), rng);
  return f;
}

PsfvBelief point_psfv(std::size_t n, Vec2 vertex, double rho, double r) {
  PsfvBelief y;
  y.pos.assign(n, vertex);
  y.rho.assign(n, rho);
  y.w.assign(n, 1.0 / static_cast<double>(n));
  y.r_prob = r;
  return y;
}

}  // namespace

TEST(Filter, RejectsBadConfig) {
  FilterConfig cfg = small_config(0);
  EXPECT_ANY_THROW(Filter(cfg, {}));
  cfg = small_config(10);
  Filter f(cfg, {{1, {1.0, 1.0}}});
  Rng rng(1);
  GridSpec other = cfg.grid;
  other.nx = 3;
  EXPECT_ANY_THROW(f.initialize(agent_at({2, 2}), {}, OccupancyGrid(other, 0.5), rng));
}

TEST(Filter, PredictWithoutNoiseKeepsState) {
  FilterConfig cfg = small_config(50);
  cfg.noise.sigma_nu = 0.0;
  cfg.noise.sigma_phi = 0.0;
  cfg.noise.sigma_p = 0.0;
  cfg.noise.sigma_rho = 0.0;
  cfg.noise.p_s = 1.0;
  Rng rng(2);
  Filter f(cfg, {{1, {1.0, 1.0}}});
  AgentState c = agent_at({2.5, 2.5});
  f.initialize(c, {}, OccupancyGrid(cfg.grid, 0.5), rng);
  f.state().psfvs.push_back(point_psfv(50, {0.5, 4.0}, 0.6, 0.7));
  const FilterState before = f.state();
  f.predict(rng);
  const FilterState& after = f.state();
  EXPECT_EQ(after.n, 1);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(after.agent.x[i].p, before.agent.x[i].p + before.agent.x[i].v);
    EXPECT_EQ(after.agent.x[i].dphi, before.agent.x[i].dphi);
  }
  EXPECT_EQ(after.psfvs[0].r_prob, 0.7);
  EXPECT_EQ(after.psfvs[0].pos, before.psfvs[0].pos);
  EXPECT_EQ(after.los_existence, before.los_existence);
  EXPECT_EQ(after.grid.p_occ, before.grid.p_occ);
}

TEST(Filter, LosEvidenceHandValue) {
  FilterConfig cfg = small_config(4);
  Rng rng(3);
  Filter f = pinned_filter(cfg, {4.0, 4.0}, rng);
  const Vec2 pa(1.0, 1.0);
  const PathGeometry g = *solve_path({4.0, 4.0}, pa, {});
  const double u = cfg.radio.amplitude_gain() / g.length;
  const Measurement z{g.length + 0.01, g.aod - 0.02, g.aoa + 0.01, u * 0.9};
  const PathEvidence e = f.evaluate_los(0, std::span(&z, 1));

  // Uniform 0.5 grid and the relative validity: alpha = 1.
  const double r = cfg.los_existence_init;
  const MeasurementVariances v = measurement_variances(z.z_u, cfg.radio);
  const double pd = detection_probability(u, cfg.clutter.u_de);
  const double expect1 =
      r * evaluate_lhf(z, g, u, v, cfg.clutter.u_de) * pd / cfg.clutter.intensity(z);
  ASSERT_EQ(e.R.size(), 2u);
  EXPECT_NEAR(e.R[1] / expect1, 1.0, 1e-9);
  EXPECT_NEAR(e.R[0], r * (1.0 - pd), 1e-6);
  EXPECT_DOUBLE_EQ(e.R_bar, 1.0 - r);
  EXPECT_EQ(e.blocked, 0.0);
  for (double a : e.alpha) EXPECT_EQ(a, 1.0);
}

TEST(Filter, FullyBlockedPathHasNoDetectionMass) {
  FilterConfig cfg = small_config(4);
  cfg.validity = ValidityNormalization::kNone;
  Rng rng(4);
  Filter f(cfg, {{1, {1.0, 1.0}}});
  AgentPrior tight{0.0, 0.0, 0.0};
  OccupancyGrid wall(cfg.grid, 0.0);
  // A solid column of occupied cells between agent and PA.
  for (int row = 0; row < cfg.grid.ny; ++row) wall.p_occ[cfg.grid.index(row, 10)] = 1.0;
  f.initialize(agent_at({4.0, 1.0}), tight, wall, rng);
  const Measurement z{3.0, 0.0, kPi, 20.0};
  const PathEvidence e = f.evaluate_los(0, std::span(&z, 1));
  EXPECT_EQ(e.R[1], 0.0);
  for (double a : e.alpha) EXPECT_EQ(a, 0.0);
  // Blocked mass enters the miss entry under the miss model.
  EXPECT_NEAR(e.R[0], cfg.los_existence_init, 1e-15);
  EXPECT_NEAR(e.blocked, cfg.los_existence_init, 1e-15);
}

TEST(Filter, DoubleBounceWithZeroExistence) {
  FilterConfig cfg = small_config(8);
  Rng rng(5);
  Filter f = pinned_filter(cfg, {3.0, 2.0}, rng);
  f.state().psfvs.push_back(point_psfv(8, {2.5, -2.0}, 0.5, 0.0));
  f.state().psfvs.push_back(point_psfv(8, {-2.0, 2.5}, 0.5, 0.8));
  const Measurement z{4.0, 0.3, 2.0, 5.0};
  const PathEvidence e = f.evaluate_double_bounce(0, 0, 1, std::span(&z, 1));
  EXPECT_EQ(e.r, 0.0);
  EXPECT_EQ(e.R[0], 0.0);
  EXPECT_EQ(e.R[1], 0.0);
  EXPECT_EQ(e.omega(0), 1.0);
  EXPECT_THROW(f.evaluate_double_bounce(0, 1, 1, std::span(&z, 1)), std::out_of_range);
}

TEST(Filter, EnumeratePathsGating) {
  FilterConfig cfg = small_config(4);
  Rng rng(6);
  Filter f = pinned_filter(cfg, {3.0, 2.0}, rng);
  f.state().psfvs.push_back(point_psfv(4, {2.5, -2.0}, 0.5, 0.5));
  f.state().psfvs.push_back(point_psfv(4, {-2.0, 2.5}, 0.5, 0.1));
  f.state().psfvs.push_back(point_psfv(4, {7.0, 2.5}, 0.5, 0.9));
  const auto paths = f.enumerate_paths();
  // LOS, three single bounces, ordered pairs of the two gated PSFVs.
  ASSERT_EQ(paths.size(), 6u);
  EXPECT_EQ(paths[0].kind, PathKind::kLos);
  EXPECT_EQ(paths[4].kind, PathKind::kDoubleBounce);
  EXPECT_EQ(paths[4].s, 0);
  EXPECT_EQ(paths[4].s2, 2);
  EXPECT_EQ(paths[5].s, 2);
  EXPECT_EQ(paths[5].s2, 0);
}

TEST(Filter, NoBirthsWithoutBirthIntensity) {
  FilterConfig cfg = small_config(30);
  cfg.mu_n = 0.0;
  Rng rng(7);
  Filter f = pinned_filter(cfg, {3.0, 2.0}, rng);
  const Measurement z[2] = {{3.0, 0.5, 2.0, 6.0}, {4.0, -0.5, 1.0, 4.0}};
  const auto births = f.birth_new_psfvs(0, z, rng);
  ASSERT_EQ(births.size(), 2u);
  for (const BirthCandidate& b : births) EXPECT_EQ(b.new_evidence, 0.0);
  const PaUpdateResult res = f.update_pa(0, z, rng);
  for (double r : res.association.new_existence) EXPECT_EQ(r, 0.0);
}

TEST(Filter, UpdateBookkeepingAndNormalization) {
  FilterConfig cfg = small_config(200);
  Rng rng(8);
  Filter f(cfg, {{1, {1.0, 1.0}}});
  f.initialize(agent_at({3.0, 2.0}), {}, OccupancyGrid(cfg.grid, 0.5), rng);
  const Vec2 pa(1.0, 1.0);
  const PathGeometry los = *solve_path({3.0, 2.0}, pa, {});
  const double u = cfg.radio.amplitude_gain() / los.length;
  const Measurement z[3] = {{los.length, los.aod, los.aoa, u},
                            {4.1, 0.4, 2.2, 5.0},
                            {2.9, -1.0, 0.3, 3.0}};
  const PaUpdateResult r1 = f.update_pa(0, z, rng);
  EXPECT_EQ(r1.psfvs_before, 0u);
  EXPECT_EQ(r1.births, 3u);
  EXPECT_EQ(f.state().psfvs.size(), 3u);
  EXPECT_NEAR(std::accumulate(f.state().agent.w.begin(), f.state().agent.w.end(), 0.0), 1.0,
              1e-12);
  for (const PsfvBelief& y : f.state().psfvs) {
    EXPECT_EQ(y.size(), 200u);
    EXPECT_GE(y.r_prob, 0.0);
    EXPECT_LE(y.r_prob, 1.0);
  }
  EXPECT_GT(f.state().los_existence[0], 0.9);
  const PaUpdateResult r2 = f.update_pa(0, std::span(z, 2), rng);
  EXPECT_EQ(r2.psfvs_before, 3u);
  EXPECT_EQ(f.state().psfvs.size(), 5u);
  // Unique ids in creation order.
  for (std::size_t s = 0; s < 5; ++s) EXPECT_EQ(f.state().psfvs[s].id, s + 1);
  for (double p : f.state().grid.p_occ) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Filter, EvidenceFollowsMeasurementPermutation) {
  FilterConfig cfg = small_config(100);
  Rng rng(9);
  Filter f(cfg, {{1, {1.0, 1.0}}});
  f.initialize(agent_at({3.0, 2.0}), {}, OccupancyGrid(cfg.grid, 0.5), rng);
  const Measurement z[3] = {{2.3, 0.4, 3.6, 30.0}, {4.1, 0.4, 2.2, 5.0}, {2.9, -1.0, 0.3, 3.0}};
  const Measurement zp[3] = {z[2], z[0], z[1]};
  const PathEvidence a = f.evaluate_los(0, z);
  const PathEvidence b = f.evaluate_los(0, zp);
  EXPECT_EQ(a.R[0], b.R[0]);
  EXPECT_EQ(a.R[1], b.R[2]);
  EXPECT_EQ(a.R[2], b.R[3]);
  EXPECT_EQ(a.R[3], b.R[1]);
}

TEST(Filter, DetectPruneThresholds) {
  FilterConfig cfg = small_config(4);
  Rng rng(10);
  Filter f = pinned_filter(cfg, {3.0, 2.0}, rng);
  f.state().psfvs.push_back(point_psfv(4, {2.5, -2.0}, 0.5, 0.09));
  f.state().psfvs.push_back(point_psfv(4, {-2.0, 2.5}, 0.4, 0.3));
  f.state().psfvs.push_back(point_psfv(4, {7.0, 2.5}, 0.7, 0.51));
  const StepEstimate est = f.detect_prune_extract();
  EXPECT_EQ(f.state().psfvs.size(), 2u);
  ASSERT_EQ(est.detected.size(), 1u);
  EXPECT_EQ(est.detected[0].pos, Vec2(7.0, 2.5));
  EXPECT_DOUBLE_EQ(est.detected[0].rho, 0.7);
  EXPECT_EQ(est.agent.p, Vec2(3.0, 2.0));
}
