#pragma once

#include <filesystem>

#include "rfslam/grid_map.hpp"

namespace rfslam {

/// Binary PGM (P5, 8 bit) with pixel = round(p_occ * 255). The top image row
/// is the grid's highest row so the picture is upright in world coordinates.
void write_occupancy_pgm(const OccupancyGrid& grid,
                         const std::filesystem::path& file);

/// CSV with header `i,row,col,p_occ`; probabilities are written with
/// round-trip precision.
void write_occupancy_csv(const OccupancyGrid& grid,
                         const std::filesystem::path& file);

/// Reads a CSV written by write_occupancy_csv into a grid with layout `spec`.
/// Throws ConfigError when the rows do not match the layout.
OccupancyGrid read_occupancy_csv(const GridSpec& spec,
                                 const std::filesystem::path& file);

}  // namespace rfslam
