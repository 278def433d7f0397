#include "rfslam/runner.hpp"

#include <chrono>
#include <fstream>
#include <map>

#include "json.hpp"
#include "rfslam/checkpoint.hpp"
#include "rfslam/csv_io.hpp"
#include "rfslam/errors.hpp"
#include "rfslam/grid_io.hpp"

namespace rfslam {

namespace {

using nlohmann::json;

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

void check_finite(const Filter& f) {
  const FilterState& s = f.state();
  for (std::size_t i = 0; i < s.agent.size(); ++i) {
    const AgentState& x = s.agent.x[i];
    if (!std::isfinite(x.p.x()) || !std::isfinite(x.p.y()) || !std::isfinite(x.dphi) ||
        !std::isfinite(s.agent.w[i]))
      throw NumericalError("non-finite agent particle at step " + std::to_string(s.n));
  }
  for (double p : s.grid.p_occ)
    if (!std::isfinite(p)) throw NumericalError("non-finite occupancy at step " + std::to_string(s.n));
  for (const PsfvBelief& y : s.psfvs)
    if (!std::isfinite(y.r_prob)) throw NumericalError("non-finite existence probability");
}

void export_paths(const Filter& filter, const std::vector<PsfvEstimate>& detected, int n,
                  const AgentState& agent, std::vector<PathEstimate>& out) {
  const FilterConfig& cfg = filter.config();
  const double gain = cfg.radio.amplitude_gain();
  std::vector<Reflector> refl(detected.size());
  std::vector<char> ok(detected.size(), 0);
  for (std::size_t s = 0; s < detected.size(); ++s) {
    if (auto line = filter.line_of(detected[s].pos)) {
      refl[s] = Reflector::unbounded(*line);
      ok[s] = 1;
    }
  }
  for (std::size_t j = 0; j < filter.anchors().size(); ++j) {
    const Vec2& pa = filter.anchors()[j].pos;
    auto emit = [&](std::span<const Reflector> r, std::uint64_t s1, std::uint64_t s2,
                    double beta) {
      auto g = solve_path(agent.p, pa, r, agent.dphi);
      if (!g) return;
      PathEstimate e;
      e.n = n;
      e.j = filter.anchors()[j].id;
      e.s1 = s1;
      e.s2 = s2;
      e.u = beta * gain / g->length;
      e.geometry = std::move(*g);
      if (e.u > 0.0) e.variances = measurement_variances(e.u, cfg.radio);
      out.push_back(std::move(e));
    };
    emit({}, 0, 0, 1.0);
    for (std::size_t s = 0; s < detected.size(); ++s)
      if (ok[s]) emit(std::span<const Reflector>(&refl[s], 1), detected[s].id, 0, detected[s].rho);
    if (!cfg.include_double_bounce) continue;
    for (std::size_t s = 0; s < detected.size(); ++s)
      for (std::size_t t = 0; t < detected.size(); ++t) {
        if (s == t || !ok[s] || !ok[t]) continue;
        const Reflector r[2] = {refl[s], refl[t]};
        emit(std::span<const Reflector>(r, 2), detected[s].id, detected[t].id,
             detected[s].rho * detected[t].rho);
      }
  }
}

json timings_json(const PhaseTimings& t, double wall) {
  return {{"synthesis", t.synthesis},     {"ray_casting", t.ray_casting},
          {"evidence", t.evidence},       {"association", t.association},
          {"fusion", t.fusion},           {"birth", t.birth},
          {"resampling", t.resampling},   {"wall", wall}};
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << text << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace

ScenarioData synthesize_scenario(const RunConfig& cfg, const EnvironmentSpec& env) {
  const FilterConfig f = resolve_filter_config(cfg, env);
  const auto traj = generate_trajectory(cfg.scenario, env.roi_min, env.roi_max);
  const int steps = cfg.scenario.n_steps;
  if (static_cast<int>(traj.size()) < steps + 1)
    throw ConfigError("trajectory has " + std::to_string(traj.size()) +
                      " states, scenario needs n_steps + 1 = " + std::to_string(steps + 1));
  ScenarioData d;
  d.truth.assign(traj.begin(), traj.begin() + steps + 1);
  d.measurements.resize(static_cast<std::size_t>(steps));
  Rng rng = make_rng(cfg.seed, 1);
  for (int n = 1; n <= steps; ++n)
    for (const PhysicalAnchor& pa : env.pas)
      d.measurements[static_cast<std::size_t>(n - 1)].push_back(
          synthesize_measurements(env, d.truth[static_cast<std::size_t>(n)], pa.pos, f.radio,
                                  f.clutter, rng));
  return d;
}

void write_scenario(const ScenarioData& data, const std::filesystem::path& dir) {
  {
    CsvWriter w(dir / "truth.csv", {"n", "p_x", "p_y", "v_x", "v_y", "dphi"});
    for (std::size_t n = 0; n < data.truth.size(); ++n) {
      const AgentState& x = data.truth[n];
      w.field(n).field(x.p.x()).field(x.p.y()).field(x.v.x()).field(x.v.y()).field(x.dphi);
      w.end_row();
    }
    w.close();
  }
  CsvWriter w(dir / "measurements.csv", {"n", "j", "m", "z_d", "z_aod", "z_aoa", "z_u"});
  for (std::size_t n = 0; n < data.measurements.size(); ++n)
    for (std::size_t j = 0; j < data.measurements[n].size(); ++j)
      for (std::size_t m = 0; m < data.measurements[n][j].size(); ++m) {
        const Measurement& z = data.measurements[n][j][m];
        w.field(n + 1).field(j).field(m + 1);
        w.field(z.z_d).field(z.z_aod).field(z.z_aoa).field(z.z_u);
        w.end_row();
      }
  w.close();
}

ScenarioData read_scenario(const std::filesystem::path& dir) {
  ScenarioData d;
  const CsvTable truth = read_csv(dir / "truth.csv");
  const std::size_t cn = truth.column("n"), cpx = truth.column("p_x"),
                    cpy = truth.column("p_y"), cvx = truth.column("v_x"),
                    cvy = truth.column("v_y"), cph = truth.column("dphi");
  for (const auto& r : truth.rows) {
    if (parse_int(r[cn]) != static_cast<long long>(d.truth.size()))
      throw ConfigError("truth.csv: steps must be consecutive from 0");
    AgentState x;
    x.p = {parse_double(r[cpx]), parse_double(r[cpy])};
    x.v = {parse_double(r[cvx]), parse_double(r[cvy])};
    x.dphi = parse_double(r[cph]);
    d.truth.push_back(x);
  }
  if (d.truth.size() < 2) throw ConfigError("truth.csv needs at least two states");
  d.measurements.resize(d.truth.size() - 1);
  const CsvTable meas = read_csv(dir / "measurements.csv");
  const std::size_t mn = meas.column("n"), mj = meas.column("j"), md = meas.column("z_d"),
                    mao = meas.column("z_aod"), maa = meas.column("z_aoa"),
                    mu = meas.column("z_u");
  for (const auto& r : meas.rows) {
    const long long n = parse_int(r[mn]), j = parse_int(r[mj]);
    if (n < 1 || n > static_cast<long long>(d.measurements.size()) || j < 0 || j > 1000)
      throw ConfigError("measurements.csv: step or PA index out of range");
    auto& per_pa = d.measurements[static_cast<std::size_t>(n - 1)];
    if (per_pa.size() <= static_cast<std::size_t>(j)) per_pa.resize(static_cast<std::size_t>(j) + 1);
    per_pa[static_cast<std::size_t>(j)].push_back(
        {parse_double(r[md]), parse_double(r[mao]), parse_double(r[maa]), parse_double(r[mu])});
  }
  return d;
}

RunResult run_filter(const RunConfig& cfg, const EnvironmentSpec& env, const ScenarioData& data,
                     ThreadPool* pool, const StepObserver& observer) {
  const auto t0 = std::chrono::steady_clock::now();
  const FilterConfig fc = resolve_filter_config(cfg, env);
  Filter filter(fc, env.pas, pool);
  Rng rng = make_rng(cfg.seed, 2);
  filter.initialize(data.truth.front(), cfg.prior, init_grid_prior(fc.grid, cfg.prior_map), rng);

  RunResult res;
  res.grid_spec = fc.grid;
  res.frame = filter.frame();
  for (int n = 1; n <= data.steps(); ++n) {
    filter.predict(rng);
    if (n == 1) res.step1_grid = filter.state().grid;
    const auto& per_pa = data.measurements[static_cast<std::size_t>(n - 1)];
    StepEstimate est;
    for (std::size_t j = 0; j < env.pas.size(); ++j) {
      static const std::vector<Measurement> kNone;
      const auto& z = j < per_pa.size() ? per_pa[j] : kNone;
      filter.update_pa(j, z, rng);
      est = filter.detect_prune_extract();
      check_finite(filter);
    }
    StepRecord rec;
    rec.n = n;
    rec.truth = data.truth[static_cast<std::size_t>(n)];
    rec.estimate = est.agent;
    rec.psfvs = filter.state().psfvs.size();
    rec.detected = est.detected.size();
    res.steps.push_back(rec);
    export_paths(filter, est.detected, n, est.agent, res.paths);
    res.detected = std::move(est.detected);
    if (observer) observer(n, filter);
  }
  res.final_state = filter.state();

  RunReport& r = res.report;
  std::vector<AgentState> e, t;
  for (const StepRecord& s : res.steps) {
    e.push_back(s.estimate);
    t.push_back(s.truth);
  }
  r.position_error = position_errors(e, t);
  r.orientation_error = orientation_errors(e, t);
  r.mean_position_error = mean(r.position_error);
  r.median_position_error = median(r.position_error);
  r.mean_orientation_error = mean(r.orientation_error);
  r.median_orientation_error = median(r.orientation_error);
  std::vector<Vec2> est_pos;
  for (const PsfvEstimate& p : res.detected) est_pos.push_back(p.pos);
  const auto truth_pos = true_sfv_vertices(env, data, res.frame);
  r.final_ospa = ospa(est_pos, truth_pos, 1.0, 1.0);
  r.detected_sfvs = est_pos.size();
  r.true_sfvs = truth_pos.size();
  r.occupancy = occupancy_stats(res.final_state.grid, rasterize_surfaces(fc.grid, env.surfaces));
  const CellTouchCounts touches = count_true_touches(env, data, fc.grid, fc.classify);
  r.grid = score_grid(res.final_state.grid, env, touches, fc.classify);
  r.timings = filter.timings();
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

CellTouchCounts count_true_touches(const EnvironmentSpec& env, const ScenarioData& data,
                                   const GridSpec& grid, const ClassifyOptions& opts) {
  CellTouchCounts c;
  c.hit.assign(grid.size(), 0);
  c.traversed.assign(grid.size(), 0);
  CellClassifier classifier(grid, opts);
  CellSets sets;
  for (std::size_t n = 1; n < data.truth.size(); ++n)
    for (const PhysicalAnchor& pa : env.pas)
      for (const TruePath& p : enumerate_true_paths(env, data.truth[n], pa.pos)) {
        classifier.classify(p.geometry, sets);
        for (CellIndex i : sets.hit) ++c.hit[i];
        for (CellIndex i : sets.traversed) ++c.traversed[i];
      }
  return c;
}

GridScore score_grid(const OccupancyGrid& grid, const EnvironmentSpec& env,
                     const CellTouchCounts& touches, const ClassifyOptions& opts,
                     std::uint32_t min_touches) {
  const GridSpec& spec = grid.spec;
  const double hit_radius = opts.hit_radius > 0.0 ? opts.hit_radius : 1.5 * spec.cell_size;
  const auto walls = rasterize_surfaces(spec, env.surfaces);
  std::vector<char> is_wall(grid.size(), 0);
  GridScore s;
  for (CellIndex i : walls) {
    is_wall[i] = 1;
    if (touches.hit[i] + touches.traversed[i] < min_touches) continue;
    ++s.wall_cells;
    if (grid.p_occ[i] > 0.5) ++s.wall_occupied;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (is_wall[i] || touches.traversed[i] < min_touches) continue;
    const Vec2 c = spec.cell_center(static_cast<CellIndex>(i));
    bool near = false;
    for (const Wall& w : env.surfaces)
      near = near || point_segment_distance(c, w.segment) <= hit_radius * hit_radius;
    if (near) continue;
    ++s.free_cells;
    if (grid.p_occ[i] < 0.3) ++s.free_confirmed;
  }
  return s;
}

std::vector<Vec2> true_sfv_vertices(const EnvironmentSpec& env, const ScenarioData& data,
                                    const VertexFrame& frame) {
  std::vector<char> used(env.surfaces.size(), 0);
  for (std::size_t n = 1; n < data.truth.size(); ++n)
    for (const PhysicalAnchor& pa : env.pas)
      for (const TruePath& p : enumerate_true_paths(env, data.truth[n], pa.pos))
        for (int s : p.surfaces)
          if (s >= 0) used[static_cast<std::size_t>(s)] = 1;
  std::vector<Vec2> out;
  for (std::size_t s = 0; s < env.surfaces.size(); ++s)
    if (used[s]) out.push_back(frame.vertex_of(env.surfaces[s].segment));
  return out;
}

std::string report_to_json(const RunReport& r) {
  json doc;
  doc["steps"] = r.position_error.size();
  doc["position_error"] = r.position_error;
  doc["orientation_error_deg"] = json::array();
  for (double e : r.orientation_error) doc["orientation_error_deg"].push_back(rad2deg(e));
  doc["mean_position_error"] = r.mean_position_error;
  doc["median_position_error"] = r.median_position_error;
  doc["mean_orientation_error_deg"] = rad2deg(r.mean_orientation_error);
  doc["median_orientation_error_deg"] = rad2deg(r.median_orientation_error);
  doc["final_ospa"] = r.final_ospa;
  doc["detected_sfvs"] = r.detected_sfvs;
  doc["true_sfvs"] = r.true_sfvs;
  doc["occupancy"] = {{"true_positive", r.occupancy.true_positive},
                      {"false_positive", r.occupancy.false_positive},
                      {"false_negative", r.occupancy.false_negative},
                      {"true_negative", r.occupancy.true_negative},
                      {"precision", r.occupancy.precision},
                      {"recall", r.occupancy.recall}};
  doc["grid"] = {{"wall_cells", r.grid.wall_cells},
                 {"wall_occupied", r.grid.wall_occupied},
                 {"wall_fraction", r.grid.wall_fraction()},
                 {"free_cells", r.grid.free_cells},
                 {"free_confirmed", r.grid.free_confirmed},
                 {"free_fraction", r.grid.free_fraction()}};
  return doc.dump(2);
}

void write_artifacts(const RunResult& res, const ScenarioData& data,
                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_scenario(data, dir);
  {
    CsvWriter w(dir / "trajectory.csv",
                {"n", "p_x", "p_y", "v_x", "v_y", "dphi", "true_p_x", "true_p_y", "true_dphi",
                 "position_error", "orientation_error", "psfvs", "detected"});
    for (std::size_t k = 0; k < res.steps.size(); ++k) {
      const StepRecord& s = res.steps[k];
      w.field(s.n).field(s.estimate.p.x()).field(s.estimate.p.y());
      w.field(s.estimate.v.x()).field(s.estimate.v.y()).field(s.estimate.dphi);
      w.field(s.truth.p.x()).field(s.truth.p.y()).field(s.truth.dphi);
      w.field(res.report.position_error[k]).field(res.report.orientation_error[k]);
      w.field(s.psfvs).field(s.detected);
      w.end_row();
    }
    w.close();
  }
  write_occupancy_csv(res.final_state.grid, dir / "occupancy.csv");
  write_occupancy_pgm(res.final_state.grid, dir / "occupancy.pgm");
  {
    CsvWriter w(dir / "sfvs.csv", {"id", "p_x", "p_y", "rho", "r_prob"});
    for (const PsfvEstimate& p : res.detected) {
      w.field(static_cast<long long>(p.id)).field(p.pos.x()).field(p.pos.y());
      w.field(p.rho).field(p.r_prob);
      w.end_row();
    }
    w.close();
  }
  {
    CsvWriter w(dir / "paths.csv",
                {"n", "pa", "kind", "sfv1", "sfv2", "pa_x", "pa_y", "i1_x", "i1_y", "i2_x",
                 "i2_y", "agent_x", "agent_y", "d", "aod", "aoa", "u", "var_d", "var_aod",
                 "var_aoa"});
    for (const PathEstimate& e : res.paths) {
      const PathGeometry& g = e.geometry;
      w.field(e.n).field(e.j).field(to_string(g.kind));
      w.field(static_cast<long long>(e.s1)).field(static_cast<long long>(e.s2));
      w.field(g.pa().x()).field(g.pa().y());
      for (std::size_t i = 0; i < 2; ++i) {
        if (i < g.interaction_count())
          w.field(g.interaction(i).x()).field(g.interaction(i).y());
        else
          w.field(std::string_view()).field(std::string_view());
      }
      w.field(g.agent().x()).field(g.agent().y());
      w.field(g.length).field(g.aod).field(g.aoa).field(e.u);
      w.field(e.variances.d).field(e.variances.aod).field(e.variances.aoa);
      w.end_row();
    }
    w.close();
  }
  save_checkpoint(res.final_state, dir / "checkpoint.json");
  write_text(dir / "report.json", report_to_json(res.report));
  write_text(dir / "timings.json", timings_json(res.report.timings, res.report.wall_seconds).dump(2));
}

RunResult run_scenario(const RunConfig& cfg, const ScenarioData* replay) {
  const EnvironmentSpec env = load_environment(cfg.environment);
  if (cfg.prior_map && !std::filesystem::exists(*cfg.prior_map))
    throw IoError("prior map not found: " + cfg.prior_map->string());
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioData data = replay ? *replay : synthesize_scenario(cfg, env);
  const double synth =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (replay && data.measurements.size() > 0 && data.measurements[0].size() > env.pas.size())
    throw ConfigError("measurements reference more PAs than the environment has");
  const std::size_t threads =
      cfg.threads > 0 ? static_cast<std::size_t>(cfg.threads) : default_thread_count(1);
  ThreadPool pool(threads);
  RunResult res = run_filter(cfg, env, data, &pool);
  res.report.timings.synthesis = replay ? 0.0 : synth;
  write_artifacts(res, data, cfg.output_dir);
  return res;
}

}  // namespace rfslam
