// rfslam command line: run, synth, replay, metrics, export-map.

#include <cstdlib>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfslam/config.hpp"
#include "rfslam/csv_io.hpp"
#include "rfslam/errors.hpp"
#include "rfslam/grid_io.hpp"
#include "rfslam/metrics.hpp"
#include "rfslam/runner.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumerical = 4 };

struct CommonFlags {
  std::string config;
  std::string env;
  std::string out;
  std::string prior_map;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("-c,--config", f.config, "run configuration (JSON)")->required();
  app->add_option("--env", f.env, "environment file, overrides the config");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--prior-map", f.prior_map, "occupancy CSV used as grid prior");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--threads", f.threads, "worker threads (default: RFSLAM_THREADS or 1)");
  app->add_option("--set", f.sets, "override a config field, e.g. filter.num_particles=500");
}

rfslam::RunConfig load(const CommonFlags& f) {
  rfslam::RunConfig cfg = rfslam::load_run_config(f.config, f.sets);
  if (!f.env.empty()) cfg.environment = f.env;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.prior_map.empty()) cfg.prior_map = f.prior_map;
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.scenario.seed = *f.seed;
  }
  if (f.threads) cfg.threads = *f.threads;
  rfslam::validate(cfg);
  return cfg;
}

void print_summary(const rfslam::RunResult& res) {
  const rfslam::RunReport& r = res.report;
  std::cout << "steps " << r.position_error.size() << "\n"
            << "median position error [m] " << r.median_position_error << "\n"
            << "median orientation error [deg] " << rfslam::rad2deg(r.median_orientation_error)
            << "\n"
            << "detected SFVs " << r.detected_sfvs << " (true " << r.true_sfvs << "), OSPA "
            << r.final_ospa << "\n"
            << "wall cells occupied " << r.grid.wall_occupied << "/" << r.grid.wall_cells
            << ", free cells confirmed " << r.grid.free_confirmed << "/" << r.grid.free_cells
            << "\n"
            << "wall time [s] " << r.wall_seconds << "\n";
}

std::vector<rfslam::Vec2> read_points(const std::filesystem::path& file) {
  const rfslam::CsvTable t = rfslam::read_csv(file);
  const std::size_t cx = t.column("p_x"), cy = t.column("p_y");
  std::vector<rfslam::Vec2> out;
  for (const auto& row : t.rows)
    out.emplace_back(rfslam::parse_double(row[cx]), rfslam::parse_double(row[cy]));
  return out;
}

int metrics(const std::string& trajectory, const std::string& sfvs, const std::string& env_file) {
  using rfslam::parse_double;
  const rfslam::CsvTable t = rfslam::read_csv(trajectory);
  std::vector<rfslam::AgentState> est, truth;
  const std::size_t px = t.column("p_x"), py = t.column("p_y"), ph = t.column("dphi"),
                    tx = t.column("true_p_x"), ty = t.column("true_p_y"),
                    th = t.column("true_dphi");
  for (const auto& row : t.rows) {
    rfslam::AgentState e, g;
    e.p = {parse_double(row[px]), parse_double(row[py])};
    e.dphi = parse_double(row[ph]);
    g.p = {parse_double(row[tx]), parse_double(row[ty])};
    g.dphi = parse_double(row[th]);
    est.push_back(e);
    truth.push_back(g);
  }
  const auto pe = rfslam::position_errors(est, truth);
  const auto oe = rfslam::orientation_errors(est, truth);
  nlohmann::json doc;
  doc["steps"] = pe.size();
  doc["mean_position_error"] = rfslam::mean(pe);
  doc["median_position_error"] = rfslam::median(pe);
  doc["mean_orientation_error_deg"] = rfslam::rad2deg(rfslam::mean(oe));
  doc["median_orientation_error_deg"] = rfslam::rad2deg(rfslam::median(oe));
  if (!sfvs.empty() && !env_file.empty()) {
    const rfslam::EnvironmentSpec env = rfslam::load_environment(env_file);
    rfslam::VertexFrame frame;
    frame.reference = 0.5 * (env.roi_min + env.roi_max);
    std::vector<rfslam::Vec2> walls;
    for (const rfslam::Wall& w : env.surfaces) walls.push_back(frame.vertex_of(w.segment));
    doc["ospa_all_walls"] = rfslam::ospa(read_points(sfvs), walls, 1.0, 1.0);
  }
  std::cout << doc.dump(2) << "\n";
  return kOk;
}

int export_map(const std::string& csv, const std::string& pgm) {
  const rfslam::CsvTable t = rfslam::read_csv(csv);
  const std::size_t cr = t.column("row"), cc = t.column("col");
  rfslam::GridSpec spec;
  spec.nx = 0;
  spec.ny = 0;
  for (const auto& row : t.rows) {
    spec.ny = std::max<int>(spec.ny, static_cast<int>(rfslam::parse_int(row[cr])) + 1);
    spec.nx = std::max<int>(spec.nx, static_cast<int>(rfslam::parse_int(row[cc])) + 1);
  }
  if (!spec.valid()) throw rfslam::ConfigError(csv + ": empty map");
  rfslam::write_occupancy_pgm(rfslam::read_occupancy_csv(spec, csv), pgm);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radio SLAM with occupancy grid mapping"};
  app.require_subcommand(1);

  CommonFlags run_flags, synth_flags, replay_flags;
  auto* run = app.add_subcommand("run", "synthesize a scenario and run the filter");
  add_common(run, run_flags);
  auto* synth = app.add_subcommand("synth", "write truth.csv and measurements.csv only");
  add_common(synth, synth_flags);
  auto* replay = app.add_subcommand("replay", "run the filter on logged measurements");
  add_common(replay, replay_flags);
  std::string replay_dir;
  replay->add_option("--measurements", replay_dir, "directory with truth.csv and measurements.csv")
      ->required();

  std::string traj, sfvs, env_file;
  auto* met = app.add_subcommand("metrics", "score a trajectory.csv offline");
  met->add_option("--trajectory", traj, "trajectory.csv from a run")->required();
  met->add_option("--sfvs", sfvs, "sfvs.csv from a run");
  met->add_option("--env", env_file, "environment file for the SFV score");

  std::string map_csv, map_pgm;
  auto* exp = app.add_subcommand("export-map", "convert an occupancy CSV to PGM");
  exp->add_option("--csv", map_csv, "occupancy CSV")->required();
  exp->add_option("--pgm", map_pgm, "output PGM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (run->parsed()) {
      print_summary(rfslam::run_scenario(load(run_flags)));
    } else if (synth->parsed()) {
      const rfslam::RunConfig cfg = load(synth_flags);
      const auto env = rfslam::load_environment(cfg.environment);
      const auto data = rfslam::synthesize_scenario(cfg, env);
      std::filesystem::create_directories(cfg.output_dir);
      rfslam::write_scenario(data, cfg.output_dir);
    } else if (replay->parsed()) {
      const rfslam::RunConfig cfg = load(replay_flags);
      const auto data = rfslam::read_scenario(replay_dir);
      print_summary(rfslam::run_scenario(cfg, &data));
    } else if (met->parsed()) {
      return metrics(traj, sfvs, env_file);
    } else if (exp->parsed()) {
      return export_map(map_csv, map_pgm);
    }
  } catch (const rfslam::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const rfslam::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const rfslam::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
