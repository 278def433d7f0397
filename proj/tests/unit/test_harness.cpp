#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "rfslam/checkpoint.hpp"
#include "rfslam/config.hpp"
#include "rfslam/csv_io.hpp"
#include "rfslam/errors.hpp"
#include "rfslam/metrics.hpp"
#include "rfslam/runner.hpp"
#include "rfslam/thread_pool.hpp"

using namespace rfslam;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

constexpr const char* kMinimal = R"({
  "environment": "env.json",
  "scenario": {"waypoints": [[1, 1], [2, 1]], "n_steps": 5},
  "filter": {"num_particles": 100}
})";

}  // namespace

TEST(Config, ParsesAndResolvesRelativePaths) {
  const RunConfig c = parse_run_config(kMinimal, "/data/run");
  EXPECT_EQ(c.environment, fs::path("/data/run/env.json"));
  EXPECT_EQ(c.filter.num_particles, 100u);
  EXPECT_EQ(c.scenario.n_steps, 5);
  ASSERT_EQ(c.scenario.waypoints.size(), 2u);
  EXPECT_EQ(c.scenario.waypoints[1], Vec2(2, 1));
}

TEST(Config, SerializationRoundTrip) {
  RunConfig c = parse_run_config(kMinimal, "/data");
  c.filter.hit_form = HitMessageForm::kSingleCell;
  c.filter.validity = ValidityNormalization::kPerPathMax;
  c.scenario.orientation = 0.1234567890123;
  c.filter.noise.sigma_phi = deg2rad(1.7);
  c.prior_map = "/data/prior.csv";
  const std::string a = run_config_to_json(c);
  const std::string b = run_config_to_json(parse_run_config(a));
  EXPECT_EQ(a, b);
  const RunConfig back = parse_run_config(a);
  EXPECT_EQ(back.scenario.orientation, c.scenario.orientation);
  EXPECT_EQ(back.filter.noise.sigma_phi, c.filter.noise.sigma_phi);
  EXPECT_EQ(back.filter.hit_form, HitMessageForm::kSingleCell);
}

TEST(Config, Overrides) {
  const std::string over[] = {"filter.num_particles=321", "scenario.mu_fa=2.5",
                              "filter.validity=\"none\"", "filter.hit_form=single_cell"};
  const RunConfig c = parse_run_config(kMinimal, {}, over);
  EXPECT_EQ(c.filter.num_particles, 321u);
  EXPECT_EQ(c.scenario.mu_fa, 2.5);
  EXPECT_EQ(c.filter.validity, ValidityNormalization::kNone);
  EXPECT_EQ(c.filter.hit_form, HitMessageForm::kSingleCell);
  const std::string nested = apply_override("{}", "a.b.c=[1,2]");
  EXPECT_NE(nested.find("\"c\""), std::string::npos);
}

TEST(Config, ValidationErrors) {
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"filter": {"p_de": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"filter": {"num_particles": 0}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"filter": {"hit_form": "odd"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"grid": {"nx": 4}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"noise": {"p_s": -0.1}})"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/cfg.json"), IoError);
}

TEST(Csv, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  int checked = 0;
  while (checked < 10000) {
    const std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    EXPECT_EQ(parse_double(format_double(v)), v);
    ++checked;
  }
  for (double v : {0.0, -0.0, 1e-300, 0.1, 1.0 / 3.0, std::numeric_limits<double>::max()})
    EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Csv, WriteReadTable) {
  const fs::path d = temp_dir("rfslam_csv");
  {
    CsvWriter w(d / "t.csv", {"a", "b", "name"});
    w.field(1.25).field(7).field("x");
    w.end_row();
    w.field(-3.0).field(std::size_t{2}).field("y");
    w.end_row();
  }
  const CsvTable t = read_csv(d / "t.csv");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_EQ(parse_double(t.rows[1][0]), -3.0);
  EXPECT_EQ(parse_int(t.rows[0][1]), 7);
  EXPECT_EQ(t.rows[1][2], "y");
  EXPECT_THROW(t.column("zzz"), ConfigError);
  EXPECT_THROW(read_csv(d / "missing.csv"), IoError);
  fs::remove_all(d);
}

TEST(Metrics, ErrorsOfIdenticalTrajectoriesAreZero) {
  std::vector<AgentState> a(5);
  for (std::size_t k = 0; k < a.size(); ++k) a[k].p = Vec2(0.1 * k, 1.0);
  for (double e : position_errors(a, a)) EXPECT_EQ(e, 0.0);
  for (double e : orientation_errors(a, a)) EXPECT_EQ(e, 0.0);
  std::vector<AgentState> b(4);
  EXPECT_THROW(position_errors(a, b), std::invalid_argument);
}

TEST(Metrics, OrientationErrorWraps) {
  std::vector<AgentState> a(1), b(1);
  a[0].dphi = deg2rad(359.0);
  b[0].dphi = deg2rad(1.0);
  EXPECT_NEAR(orientation_errors(a, b)[0], deg2rad(2.0), 1e-12);
}

TEST(Metrics, MedianAndMean) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  const double v[] = {1.0, 2.0, 6.0};
  EXPECT_EQ(mean(v), 3.0);
}

TEST(Metrics, OspaCases) {
  const std::vector<Vec2> none;
  const std::vector<Vec2> two{{0, 0}, {1, 0}};
  EXPECT_EQ(ospa(none, none), 0.0);
  EXPECT_EQ(ospa(none, two, 2.0), 2.0);
  EXPECT_EQ(ospa(two, two), 0.0);
  const std::vector<Vec2> shifted{{1.1, 0}, {0.1, 0}};
  EXPECT_NEAR(ospa(shifted, two), 0.1, 1e-12);
  const std::vector<Vec2> one{{0, 0.2}};
  // One matched at 0.2 plus one cardinality penalty of 1, over 2.
  EXPECT_NEAR(ospa(one, two, 1.0), 0.6, 1e-12);
}

TEST(Metrics, AssignmentMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + t % 5;
    std::vector<std::vector<double>> c(n, std::vector<double>(n));
    for (auto& row : c)
      for (double& x : row) x = u(rng);
    const auto a = min_cost_assignment(c);
    double got = 0.0;
    for (std::size_t i = 0; i < n; ++i) got += c[i][a[i]];
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    double best = 1e9;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += c[i][p[i]];
      best = std::min(best, s);
    } while (std::next_permutation(p.begin(), p.end()));
    EXPECT_NEAR(got, best, 1e-12);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  FilterState s;
  s.n = 12;
  s.next_id = 9;
  s.agent.x.resize(3);
  s.agent.w = {0.2, 0.3, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    s.agent.x[i].p = Vec2(1.0 / (i + 3), std::sqrt(2.0) * i);
    s.agent.x[i].v = Vec2(1e-17, -0.01);
    s.agent.x[i].dphi = 0.1 * i;
  }
  PsfvBelief y;
  y.id = 4;
  y.r_prob = 0.77;
  y.pos = {{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}};
  y.rho = {0.31, 0.32, 0.33};
  y.w = {0.1, 0.1, 0.8};
  s.psfvs.push_back(y);
  GridSpec g;
  g.nx = 2;
  g.ny = 2;
  g.cell_size = 0.06;
  s.grid = OccupancyGrid(g, 0.5);
  s.grid.p_occ[3] = 1.0 / 7.0;
  s.los_existence = {0.9, 0.123456789};

  const fs::path d = temp_dir("rfslam_ckpt");
  save_checkpoint(s, d / "c.json");
  const FilterState b = load_checkpoint(d / "c.json");
  EXPECT_EQ(b.n, 12);
  EXPECT_EQ(b.next_id, 9u);
  EXPECT_EQ(b.agent.w, s.agent.w);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.agent.x[i].p, s.agent.x[i].p);
    EXPECT_EQ(b.agent.x[i].v, s.agent.x[i].v);
    EXPECT_EQ(b.agent.x[i].dphi, s.agent.x[i].dphi);
  }
  ASSERT_EQ(b.psfvs.size(), 1u);
  EXPECT_EQ(b.psfvs[0].pos, y.pos);
  EXPECT_EQ(b.psfvs[0].rho, y.rho);
  EXPECT_EQ(b.psfvs[0].r_prob, y.r_prob);
  EXPECT_EQ(b.grid.p_occ, s.grid.p_occ);
  EXPECT_EQ(b.grid.spec.cell_size, g.cell_size);
  EXPECT_EQ(b.los_existence, s.los_existence);

  std::ofstream(d / "bad.json") << R"({"version": 99})";
  EXPECT_THROW(load_checkpoint(d / "bad.json"), ConfigError);
  EXPECT_THROW(load_checkpoint(d / "none.json"), IoError);
  fs::remove_all(d);
}

TEST(ThreadPool, PartitionCoversRangeOnce) {
  for (std::size_t threads : {1u, 2u, 3u, 5u}) {
    ThreadPool pool(threads);
    EXPECT_EQ(pool.size(), threads);
    for (std::size_t n : {0u, 1u, 7u, 1000u}) {
      std::vector<std::atomic<int>> hit(n);
      pool.parallel_for(n, [&](std::size_t b, std::size_t e, std::size_t w) {
        EXPECT_LT(w, pool.size());
        for (std::size_t i = b; i < e; ++i) ++hit[i];
      });
      for (auto& h : hit) EXPECT_EQ(h.load(), 1);
    }
  }
}

TEST(ThreadPool, RethrowsWorkerException) {
  ThreadPool pool(3);
  EXPECT_THROW(pool.parallel_for(10,
                                 [](std::size_t b, std::size_t, std::size_t) {
                                   if (b > 0) throw std::runtime_error("boom");
                                 }),
               std::runtime_error);
  int calls = 0;
  pool.parallel_for(1, [&](std::size_t, std::size_t, std::size_t) { ++calls; });
  EXPECT_EQ(calls, 1);
}

TEST(Runner, MissingEnvironmentIsIoError) {
  RunConfig c = parse_run_config(kMinimal, "/nonexistent");
  c.output_dir = fs::temp_directory_path() / "rfslam_missing_env";
  EXPECT_THROW(run_scenario(c), IoError);
}

TEST(Runner, ScenarioWriteReadRoundTrip) {
  EnvironmentSpec env;
  env.surfaces.push_back({{{0, 0}, {5, 0}}, 0.5});
  env.surfaces.push_back({{{0, 5}, {5, 5}}, 0.5});
  env.pas.push_back({1, {2.5, 2.5}});
  RunConfig c = parse_run_config(kMinimal);
  const ScenarioData data = synthesize_scenario(c, env);
  EXPECT_EQ(data.steps(), 5);
  EXPECT_EQ(data.truth.size(), 6u);
  const fs::path d = temp_dir("rfslam_scn");
  write_scenario(data, d);
  const ScenarioData back = read_scenario(d);
  ASSERT_EQ(back.steps(), data.steps());
  for (int n = 0; n < data.steps(); ++n) {
    ASSERT_EQ(back.measurements[n][0].size(), data.measurements[n][0].size());
    for (std::size_t m = 0; m < data.measurements[n][0].size(); ++m) {
      EXPECT_EQ(back.measurements[n][0][m].z_d, data.measurements[n][0][m].z_d);
      EXPECT_EQ(back.measurements[n][0][m].z_u, data.measurements[n][0][m].z_u);
    }
  }
  c.scenario.n_steps = 100;
  EXPECT_THROW(synthesize_scenario(c, env), ConfigError);
  fs::remove_all(d);
}
