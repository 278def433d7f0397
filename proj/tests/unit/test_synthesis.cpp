#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "rfslam/errors.hpp"
#include "rfslam/synthesis.hpp"

using namespace rfslam;

namespace {

EnvironmentSpec box_room() {
  EnvironmentSpec env;
  const Vec2 c[4] = {{0, 0}, {5, 0}, {5, 5}, {0, 5}};
  for (int k = 0; k < 4; ++k) env.surfaces.push_back({{c[k], c[(k + 1) % 4]}, 0.5});
  env.pas.push_back({1, {1.0, 1.0}});
  return env;
}

ScenarioConfig straight(double len) {
  ScenarioConfig s;
  s.waypoints = {{1.0, 1.0}, {1.0 + len, 1.0}};
  return s;
}

}  // namespace

TEST(Trajectory, UniformSpacing) {
  const auto tr = generate_trajectory(straight(1.0), {0, 0}, {5, 5});
  ASSERT_EQ(tr.size(), 21u);
  for (std::size_t k = 1; k < tr.size(); ++k) {
    EXPECT_NEAR((tr[k].p - tr[k - 1].p).norm(), 0.05, 1e-12);
    EXPECT_EQ(tr[k].v, (tr[k].p - tr[k - 1].p) / 1.0);
  }
}

TEST(Trajectory, ClosedLoopReturnsToStart) {
  ScenarioConfig s;
  s.waypoints = {{1, 1}, {3, 1}, {3, 2.5}, {1, 1}};
  const auto tr = generate_trajectory(s, {0, 0}, {5, 5});
  EXPECT_LE((tr.back().p - tr.front().p).norm(), s.step_size);
}

TEST(Trajectory, OrientationDrift) {
  ScenarioConfig s = straight(0.5);
  s.orientation = 0.2;
  s.orientation_drift = 0.01;
  const auto tr = generate_trajectory(s, {0, 0}, {5, 5});
  EXPECT_DOUBLE_EQ(tr[3].dphi, 0.23);
}

TEST(Trajectory, RejectsBadWaypoints) {
  ScenarioConfig s = straight(1.0);
  s.waypoints.push_back({6.0, 1.0});
  EXPECT_THROW(generate_trajectory(s, {0, 0}, {5, 5}), ConfigError);
  s.waypoints = {{1, 1}};
  EXPECT_THROW(generate_trajectory(s, {0, 0}, {5, 5}), ConfigError);
}

TEST(TruePaths, EmptyEnvironmentIsLosOnly) {
  EnvironmentSpec env;
  AgentState a;
  a.p = {3, 2};
  const auto paths = enumerate_true_paths(env, a, {0, 0});
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0].geometry.kind, PathKind::kLos);
}

TEST(TruePaths, LongParallelWall) {
  EnvironmentSpec env;
  env.surfaces.push_back({{{-100, 2}, {100, 2}}, 0.8});
  AgentState a;
  a.p = {4, 0};
  const auto paths = enumerate_true_paths(env, a, {0, 0});
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[1].geometry.kind, PathKind::kSingleBounce);
  EXPECT_NEAR(paths[1].geometry.interaction(0).x(), 2.0, 1e-12);
  EXPECT_NEAR(paths[1].geometry.interaction(0).y(), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(paths[1].beta, 0.8);
}

TEST(TruePaths, OccludedLosAbsent) {
  EnvironmentSpec env;
  env.surfaces.push_back({{{2, -1}, {2, 1}}, 0.5});
  AgentState a;
  a.p = {4, 0};
  for (const TruePath& p : enumerate_true_paths(env, a, {0, 0}))
    EXPECT_NE(p.geometry.kind, PathKind::kLos);
}

TEST(TruePaths, BoxRoomCounts) {
  const EnvironmentSpec env = box_room();
  AgentState a;
  a.p = {3.2, 2.1};
  const auto paths = enumerate_true_paths(env, a, env.pas[0].pos);
  int single = 0, dbl = 0;
  for (const TruePath& p : paths) {
    single += p.geometry.kind == PathKind::kSingleBounce;
    dbl += p.geometry.kind == PathKind::kDoubleBounce;
    if (p.geometry.kind == PathKind::kDoubleBounce) EXPECT_DOUBLE_EQ(p.beta, 0.25);
  }
  EXPECT_EQ(single, 4);
  EXPECT_GT(dbl, 0);
}

TEST(Synthesis, NoiselessModeIsExact) {
  const EnvironmentSpec env = box_room();
  AgentState a;
  a.p = {3.2, 2.1};
  a.dphi = 0.4;
  const RadioConstants radio = RadioConstants::calibrated(30.0);
  ClutterModel clutter;
  clutter.u_de = amplitude_from_db(6.0);
  SynthesisOptions opts;
  opts.noiseless = true;
  opts.force_detection = true;
  opts.false_alarms = false;
  Rng rng(1);
  const auto paths = enumerate_true_paths(env, a, env.pas[0].pos);
  auto z = synthesize_measurements(paths, radio, clutter, rng, opts);
  ASSERT_EQ(z.size(), paths.size());
  std::sort(z.begin(), z.end(), [](auto& x, auto& y) { return x.z_d < y.z_d; });
  std::vector<double> d;
  for (const TruePath& p : paths) d.push_back(p.geometry.length);
  std::sort(d.begin(), d.end());
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(z[k].z_d, d[k]);
  for (const Measurement& m : z) EXPECT_GE(m.z_u, clutter.u_de);
}

TEST(Synthesis, SeedDeterminismAndFloor) {
  const EnvironmentSpec env = box_room();
  AgentState a;
  a.p = {2.0, 3.0};
  const RadioConstants radio = RadioConstants::calibrated(30.0);
  ClutterModel clutter;
  clutter.u_de = amplitude_from_db(6.0);
  Rng r1(42), r2(42);
  for (int t = 0; t < 50; ++t) {
    const auto z1 = synthesize_measurements(env, a, env.pas[0].pos, radio, clutter, r1);
    const auto z2 = synthesize_measurements(env, a, env.pas[0].pos, radio, clutter, r2);
    ASSERT_EQ(z1.size(), z2.size());
    for (std::size_t k = 0; k < z1.size(); ++k) {
      EXPECT_EQ(z1[k].z_d, z2[k].z_d);
      EXPECT_EQ(z1[k].z_u, z2[k].z_u);
      EXPECT_GE(z1[k].z_u, clutter.u_de);
      EXPECT_GT(z1[k].z_aod, -kPi);
      EXPECT_LE(z1[k].z_aod, kPi);
    }
  }
}

TEST(Synthesis, DistanceNoiseStdMatchesCrlb) {
  // One weak path so that sigma_d is large enough to measure.
  TruePath p;
  p.geometry = *solve_path({8.0, 0.0}, {0.0, 0.0}, {});
  p.beta = 0.3;
  const RadioConstants radio = RadioConstants::calibrated(30.0);
  ClutterModel clutter;
  clutter.u_de = amplitude_from_db(6.0);
  clutter.mu_fa = 0.0;
  SynthesisOptions opts;
  opts.force_detection = true;
  Rng rng(3);
  const int n = 10000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto z = synthesize_measurements(std::span(&p, 1), radio, clutter, rng, opts);
    const double e = z.at(0).z_d - p.geometry.length;
    s += e;
    s2 += e * e;
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  const double u = p.beta * radio.amplitude_gain() / p.geometry.length;
  EXPECT_NEAR(sd / std::sqrt(measurement_variances(u, radio).d), 1.0, 0.05);
}

TEST(Synthesis, FalseAlarmsWithinSupport) {
  ClutterModel clutter;
  clutter.u_de = 2.0;
  Rng rng(4);
  for (int k = 0; k < 1000; ++k) {
    const Measurement z = sample_false_alarm(clutter, rng);
    EXPECT_GT(clutter.density(z), 0.0);
  }
}

TEST(Environment, SaveLoadRoundTrip) {
  EnvironmentSpec env = box_room();
  env.surfaces[2].rho = 0.8;
  const auto file = std::filesystem::temp_directory_path() / "rfslam_env.json";
  save_environment(env, file);
  const EnvironmentSpec back = load_environment(file);
  ASSERT_EQ(back.surfaces.size(), 4u);
  EXPECT_EQ(back.surfaces[2].rho, 0.8);
  EXPECT_EQ(back.pas[0].pos, env.pas[0].pos);
  std::filesystem::remove(file);
  EXPECT_THROW(load_environment("/nonexistent/env.json"), IoError);
}

TEST(Environment, Validation) {
  EnvironmentSpec env = box_room();
  env.surfaces[0].rho = 1.5;
  EXPECT_THROW(env.validate(), ConfigError);
  env = box_room();
  env.surfaces[0].segment.p2 = env.surfaces[0].segment.p1;
  EXPECT_THROW(env.validate(), ConfigError);
}
