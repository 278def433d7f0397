#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "rfslam/config.hpp"
#include "rfslam/inference.hpp"
#include "rfslam/metrics.hpp"
#include "rfslam/synthesis.hpp"
#include "rfslam/thread_pool.hpp"

namespace rfslam {

/// Ground truth and measurements of one scenario. truth[0] is the initial
/// state; measurements[n - 1][j] belong to step n and PA j.
struct ScenarioData {
  std::vector<AgentState> truth;
  std::vector<std::vector<std::vector<Measurement>>> measurements;

  int steps() const { return static_cast<int>(measurements.size()); }
};

/// Synthesizes cfg.scenario.n_steps steps from the trajectory. Throws
/// ConfigError when the trajectory is shorter than that.
ScenarioData synthesize_scenario(const RunConfig& cfg, const EnvironmentSpec& env);

void write_scenario(const ScenarioData& data, const std::filesystem::path& dir);
ScenarioData read_scenario(const std::filesystem::path& dir);

/// Estimated specular path for export ("soft ray tracing").
struct PathEstimate {
  int n = 0;
  int j = 0;
  std::uint64_t s1 = 0;  ///< 0 for LOS
  std::uint64_t s2 = 0;  ///< 0 unless double bounce
  PathGeometry geometry;
  double u = 0.0;
  MeasurementVariances variances;
};

struct StepRecord {
  int n = 0;
  AgentState truth;
  AgentState estimate;
  std::size_t psfvs = 0;
  std::size_t detected = 0;
};

struct CellTouchCounts {
  std::vector<std::uint32_t> hit;
  std::vector<std::uint32_t> traversed;
};

struct GridScore {
  std::size_t wall_cells = 0;       ///< wall cells touched by >= min_touches paths
  std::size_t wall_occupied = 0;    ///< ... of which p_occ > 0.5
  std::size_t free_cells = 0;       ///< interior cells traversed by >= min_touches paths
  std::size_t free_confirmed = 0;   ///< ... of which p_occ < 0.3
  double wall_fraction() const {
    return wall_cells ? static_cast<double>(wall_occupied) / static_cast<double>(wall_cells) : 0.0;
  }
  double free_fraction() const {
    return free_cells ? static_cast<double>(free_confirmed) / static_cast<double>(free_cells) : 0.0;
  }
};

struct RunReport {
  std::vector<double> position_error;
  std::vector<double> orientation_error;
  double mean_position_error = 0.0;
  double median_position_error = 0.0;
  double mean_orientation_error = 0.0;
  double median_orientation_error = 0.0;
  double final_ospa = 0.0;
  std::size_t detected_sfvs = 0;
  std::size_t true_sfvs = 0;
  OccupancyStats occupancy;
  GridScore grid;
  PhaseTimings timings;
  double wall_seconds = 0.0;
};

struct RunResult {
  RunReport report;
  std::vector<StepRecord> steps;
  std::vector<PsfvEstimate> detected;
  std::vector<PathEstimate> paths;
  FilterState final_state;
  OccupancyGrid step1_grid;  ///< grid belief entering the first update
  GridSpec grid_spec;
  VertexFrame frame;
};

/// Optional per-step observer (after the last PA of step n).
using StepObserver = std::function<void(int n, const Filter& filter)>;

/// Runs the filter over `data`. `pool` may be null.
RunResult run_filter(const RunConfig& cfg, const EnvironmentSpec& env,
                     const ScenarioData& data, ThreadPool* pool,
                     const StepObserver& observer = {});

/// True-path cell interaction counts over the whole scenario.
CellTouchCounts count_true_touches(const EnvironmentSpec& env, const ScenarioData& data,
                                   const GridSpec& grid, const ClassifyOptions& opts);

/// Occupancy scoring on well-observed wall and interior cells.
GridScore score_grid(const OccupancyGrid& grid, const EnvironmentSpec& env,
                     const CellTouchCounts& touches, const ClassifyOptions& opts,
                     std::uint32_t min_touches = 5);

/// Vertices of the walls that produced at least one true path.
std::vector<Vec2> true_sfv_vertices(const EnvironmentSpec& env, const ScenarioData& data,
                                    const VertexFrame& frame);

/// Writes trajectory.csv, truth.csv, measurements.csv, occupancy.csv/.pgm,
/// sfvs.csv, paths.csv, checkpoint.json and report.json (deterministic), plus
/// timings.json.
void write_artifacts(const RunResult& result, const ScenarioData& data,
                     const std::filesystem::path& dir);

/// Loads the environment, synthesizes (or takes `replay`), filters and
/// writes all artifacts to cfg.output_dir.
RunResult run_scenario(const RunConfig& cfg, const ScenarioData* replay = nullptr);

std::string report_to_json(const RunReport& report);

}  // namespace rfslam
