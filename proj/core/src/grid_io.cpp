#include "rfslam/grid_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "rfslam/csv_io.hpp"
#include "rfslam/errors.hpp"

namespace rfslam {

void write_occupancy_pgm(const OccupancyGrid& grid,
                         const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  const auto& s = grid.spec;
  out << "P5\n" << s.nx << ' ' << s.ny << "\n255\n";
  std::string row(static_cast<std::size_t>(s.nx), '\0');
  for (int r = s.ny - 1; r >= 0; --r) {
    for (int c = 0; c < s.nx; ++c) {
      const double p = std::clamp(grid.p_occ[s.index(r, c)], 0.0, 1.0);
      row[static_cast<std::size_t>(c)] =
          static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  out.flush();
  if (!out) throw IoError("write failed: " + file.string());
}

void write_occupancy_csv(const OccupancyGrid& grid,
                         const std::filesystem::path& file) {
  CsvWriter w(file, {"i", "row", "col", "p_occ"});
  const auto& s = grid.spec;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto c = static_cast<CellIndex>(i);
    w.field(i).field(s.row_of(c)).field(s.col_of(c)).field(grid.p_occ[i]);
    w.end_row();
  }
  w.close();
}

OccupancyGrid read_occupancy_csv(const GridSpec& spec,
                                 const std::filesystem::path& file) {
  const CsvTable t = read_csv(file);
  const std::size_t ci = t.column("i");
  const std::size_t cr = t.column("row");
  const std::size_t cc = t.column("col");
  const std::size_t cp = t.column("p_occ");
  if (t.rows.size() != spec.size())
    throw ConfigError(file.string() + ": " + std::to_string(t.rows.size()) +
                      " cells, grid expects " + std::to_string(spec.size()));
  OccupancyGrid g(spec, 0.5);
  std::vector<std::uint8_t> seen(spec.size(), 0);
  for (const auto& row : t.rows) {
    const long long i = parse_int(row[ci]);
    if (i < 0 || static_cast<std::size_t>(i) >= spec.size())
      throw ConfigError(file.string() + ": cell index out of range");
    const auto c = static_cast<CellIndex>(i);
    if (parse_int(row[cr]) != spec.row_of(c) || parse_int(row[cc]) != spec.col_of(c))
      throw ConfigError(file.string() + ": row/col disagree with grid layout");
    const double p = parse_double(row[cp]);
    if (!(p >= 0.0 && p <= 1.0))
      throw ConfigError(file.string() + ": p_occ outside [0,1]");
    if (seen[c]) throw ConfigError(file.string() + ": duplicate cell index");
    seen[c] = 1;
    g.p_occ[c] = p;
  }
  return g;
}

}  // namespace rfslam
