#include <benchmark/benchmark.h>

#include <random>

#include "rfslam/association.hpp"
#include "rfslam/grid_map.hpp"
#include "rfslam/inference.hpp"
#include "rfslam/propagation.hpp"

using namespace rfslam;

namespace {

GridSpec desk_grid() {
  GridSpec g;
  g.origin = {-0.5, -0.5};
  g.cell_size = 0.06;
  g.nx = 101;
  g.ny = 101;
  return g;
}

PathGeometry single_bounce() {
  const Reflector wall = Reflector::wall({{0.0, 5.0}, {5.0, 5.0}});
  return *solve_path({3.2, 1.4}, {1.0, 1.0}, std::span(&wall, 1));
}

}  // namespace

static void BM_TraceRay(benchmark::State& state) {
  const GridSpec g = desk_grid();
  std::vector<CellIndex> out;
  for (auto _ : state) {
    trace_ray(g, {0.1, 0.2}, {4.7, 4.3}, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_TraceRay);

static void BM_Classify(benchmark::State& state) {
  CellClassifier c(desk_grid());
  const PathGeometry p = single_bounce();
  CellSets sets;
  for (auto _ : state) {
    c.classify(p, sets);
    benchmark::DoNotOptimize(sets.traversed.data());
  }
}
BENCHMARK(BM_Classify);

static void BM_Validity(benchmark::State& state) {
  const GridSpec g = desk_grid();
  OccupancyGrid a(g, 0.5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (double& p : a.p_occ) p = u(rng);
  const ValidityTable table(a);
  const CellSets sets = classify_cells(g, single_bounce());
  for (auto _ : state) benchmark::DoNotOptimize(log_relative_validity(table, sets, 0.5));
}
BENCHMARK(BM_Validity);

static void BM_Association(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  AssociationProblem p(n, n);
  for (double& w : p.omega) w = u(rng);
  for (double& c : p.clutter) c = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(solve_association(p).eta.data());
}
BENCHMARK(BM_Association)->Arg(4)->Arg(16)->Arg(32);

static void BM_FilterUpdate(benchmark::State& state) {
  FilterConfig cfg;
  cfg.num_particles = static_cast<std::size_t>(state.range(0));
  cfg.grid = desk_grid();
  cfg.clutter.u_de = amplitude_from_db(6.0);
  const std::vector<PhysicalAnchor> pas{{1, {1.0, 1.0}}};
  AgentState c;
  c.p = {3.2, 1.4};
  const PathGeometry los = *solve_path(c.p, pas[0].pos, {});
  const PathGeometry sb = single_bounce();
  const auto z_of = [&](const PathGeometry& g, double beta) {
    return Measurement{g.length, g.aod, g.aoa, beta * cfg.radio.amplitude_gain() / g.length};
  };
  const std::vector<Measurement> z{z_of(los, 1.0), z_of(sb, 0.5)};
  for (auto _ : state) {
    state.PauseTiming();
    Rng rng(3);
    Filter f(cfg, pas);
    f.initialize(c, {}, OccupancyGrid(cfg.grid, 0.5), rng);
    f.update_pa(0, z, rng);
    f.predict(rng);
    state.ResumeTiming();
    f.update_pa(0, z, rng);
  }
}
BENCHMARK(BM_FilterUpdate)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
