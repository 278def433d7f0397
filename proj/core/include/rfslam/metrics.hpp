#pragma once

#include <span>
#include <vector>

#include "rfslam/dynamics.hpp"
#include "rfslam/grid_map.hpp"
#include "rfslam/synthesis.hpp"

namespace rfslam {

/// Euclidean position error per step. Throws std::invalid_argument on a
/// length mismatch.
std::vector<double> position_errors(std::span<const AgentState> est,
                                    std::span<const AgentState> truth);
/// Absolute wrapped orientation error per step (rad).
std::vector<double> orientation_errors(std::span<const AgentState> est,
                                       std::span<const AgentState> truth);

double median(std::vector<double> v);
double mean(std::span<const double> v);

/// Minimal-cost assignment for a rows x cols cost matrix (rows <= cols);
/// returns the column of each row.
std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost);

/// OSPA distance of order p with cutoff c. Two empty sets have distance 0.
double ospa(std::span<const Vec2> estimated, std::span<const Vec2> truth,
            double cutoff = 1.0, double order = 1.0);

/// Cells crossed by the true surfaces.
std::vector<CellIndex> rasterize_surfaces(const GridSpec& grid,
                                          std::span<const Wall> surfaces);

struct OccupancyStats {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Confusion counts of p_occ > threshold against the rasterized surfaces.
OccupancyStats occupancy_stats(const OccupancyGrid& grid,
                               std::span<const CellIndex> wall_cells,
                               double threshold = 0.5);

}  // namespace rfslam
