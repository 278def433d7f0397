#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/path.hpp"

namespace rfslam {

using CellIndex = std::uint32_t;

/// Row-major square-cell raster. Cell (row, col) covers
/// [origin + (col, row) * cell_size, origin + (col + 1, row + 1) * cell_size).
struct GridSpec {
  Vec2 origin = Vec2::Zero();
  double cell_size = 1.0;
  int nx = 1;
  int ny = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }
  bool valid() const { return cell_size > 0.0 && nx >= 1 && ny >= 1; }

  CellIndex index(int row, int col) const {
    return static_cast<CellIndex>(row * nx + col);
  }
  int row_of(CellIndex i) const { return static_cast<int>(i) / nx; }
  int col_of(CellIndex i) const { return static_cast<int>(i) % nx; }

  Vec2 cell_center(CellIndex i) const {
    return origin + cell_size * Vec2(col_of(i) + 0.5, row_of(i) + 0.5);
  }
  Vec2 upper_corner() const { return origin + cell_size * Vec2(nx, ny); }

  std::optional<CellIndex> locate(const Vec2& p) const;

  /// Grid covering [lo, hi] with the given cell size (rounded up).
  static GridSpec covering(const Vec2& lo, const Vec2& hi, double cell_size);
};

/// Per-cell occupancy probability p(o_i = 1). Free probability is implicit.
struct OccupancyGrid {
  GridSpec spec;
  std::vector<double> p_occ;

  OccupancyGrid() = default;
  OccupancyGrid(const GridSpec& s, double p) : spec(s), p_occ(s.size(), p) {}

  std::size_t size() const { return p_occ.size(); }
  double occupied(CellIndex i) const { return p_occ[i]; }
  double free(CellIndex i) const { return 1.0 - p_occ[i]; }
};

/// Cells a path interacts with. Unconstrained cells are the implicit
/// complement of traversed and hit.
struct CellSets {
  std::vector<CellIndex> traversed;  ///< must all be free
  std::vector<CellIndex> hit;        ///< at least one must be occupied
  /// Reflected paths need an occupied hit cell; a LOS path does not.
  bool requires_hit = false;
};

/// Cells whose interior the segment (a, b) crosses, ordered from a to b.
/// The segment is clipped to the grid; a == b yields the containing cell.
std::vector<CellIndex> trace_ray(const GridSpec& grid, const Vec2& a,
                                 const Vec2& b);
void trace_ray(const GridSpec& grid, const Vec2& a, const Vec2& b,
               std::vector<CellIndex>& out);

struct ClassifyOptions {
  double hit_radius = 0.0;      ///< default: 1.5 * cell_size
  double endpoint_guard = 0.0;  ///< default: 1.0 * cell_size
  /// Skip cells of a segment that lie within surface_margin of straddling the
  /// surface of an adjacent interaction.
  bool surface_guard = true;
  double surface_margin = 0.0;  ///< default: 1.0 * cell_size
  /// Keep only hit-disc cells that straddle the local reflecting surface.
  bool hit_on_surface = true;
};

CellSets classify_cells(const GridSpec& grid, const PathGeometry& path,
                        ClassifyOptions opts = {});
/// Allocation-reusing variant for hot loops. `scratch` is working storage.
void classify_cells(const GridSpec& grid, const PathGeometry& path,
                    const ClassifyOptions& opts, CellSets& out,
                    std::vector<CellIndex>& scratch);

/// Reusable classifier producing the same sets as classify_cells, without
/// sorting: hit cells in disc order, traversed cells in ray order.
class CellClassifier {
 public:
  CellClassifier(const GridSpec& grid, const ClassifyOptions& opts = {});

  void classify(const PathGeometry& path, CellSets& out);
  const GridSpec& grid() const { return grid_; }

 private:
  void next_epoch();

  GridSpec grid_;
  double hit_radius_;
  bool surface_guard_ = true;
  bool hit_on_surface_ = true;
  double surface_margin_ = 0.0;
  double guard2_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::vector<CellIndex> scratch_;
};

/// Per-cell logs of the predicted free probability, for repeated validity
/// evaluation against one grid.
struct ValidityTable {
  std::vector<double> log_free;

  explicit ValidityTable(const OccupancyGrid& alpha);
};

/// Probability mass of the occupancy configurations that support a path:
/// prod_{traversed} a(o=0) * (1 - prod_{hit} (1 - a(o=1))). The hit factor is
/// 1 for LOS paths and 0 for reflected paths with no hit cell on the grid.
double path_validity_message(const OccupancyGrid& alpha, const CellSets& sets);
/// Natural log of path_validity_message (may be -inf).
double log_path_validity_message(const OccupancyGrid& alpha,
                                 const CellSets& sets);
double log_path_validity_message(const ValidityTable& table,
                                 const CellSets& sets);
/// Log of the validity message divided by its value on a uniform grid with
/// occupancy p_ref, capped at 0. Traversed cells with p_occ <= p_ref are
/// neutral.
double log_relative_validity(const ValidityTable& table, const CellSets& sets,
                             double p_ref);

/// Prediction through the stationary transition (identity). A nonzero
/// flip_probability applies the symmetric two-state Markov kernel instead.
OccupancyGrid predict_grid(const OccupancyGrid& prev,
                           double flip_probability = 0.0);

/// How a hit cell's message is formed. kSingleCell divides by a(o_i=1), which is
/// exact when the hit set is a single cell; kExact uses the conditional
/// support probability for any hit-set size.
enum class HitMessageForm { kSingleCell, kExact };

inline constexpr double kDivisionGuard = 1e-12;

using CellMessagePair = std::array<double, 2>;  ///< {kappa(o=0), kappa(o=1)}

/// Message from one path factor to one cell.
///
/// `eta` and `evidence` are indexed by association value a in {0} u M
/// (index 0 is the missed-detection hypothesis); `nonexistence` is the
/// path's nonexistence mass. `eta` is the message arriving at the path
/// factor from its association variable.
CellMessagePair cell_messages(CellIndex cell, const CellSets& sets,
                              const OccupancyGrid& alpha,
                              std::span<const double> eta,
                              std::span<const double> evidence,
                              double nonexistence,
                              HitMessageForm form = HitMessageForm::kSingleCell);

struct CellMessage {
  CellIndex cell;
  double k0;
  double k1;
};

/// Accumulates particle-averaged cell messages for one path. Each particle
/// contributes its association-weighted evidence sum_a eta(a) R_k(a) and its
/// cell sets; cells never touched keep kappa(0) == kappa(1).
///
/// With reference > 0 the traversed-cell factor is min(1, a(o=0) / (1 - reference)),
/// matching log_relative_validity.
class PathCellAccumulator {
 public:
  PathCellAccumulator(const OccupancyGrid& alpha, HitMessageForm form,
                      double reference = 0.0);

  void reset();
  void add_particle(double weighted_evidence, const CellSets& sets);
  /// Messages for all touched cells, sorted by cell index.
  std::vector<CellMessage> finish(double eta0_times_nonexistence);

  double total_evidence() const { return total_; }

 private:
  const OccupancyGrid* alpha_;
  HitMessageForm form_;
  double ref_free_ = 0.0;
  double total_ = 0.0;
  std::vector<double> delta0_;
  std::vector<double> delta1_;
  std::vector<CellIndex> touched_;
  std::vector<std::uint8_t> mark_;
};

struct FusionOptions {
  double occupancy_floor = 0.15;  ///< set <= 0 to disable
};

/// Belief alpha(o_i) * prod_paths kappa(o_i), normalized per cell, with the
/// occupancy floor applied afterwards. Paths whose message is all zero for a
/// cell are skipped for that cell.
OccupancyGrid fuse_cell_beliefs(
    const OccupancyGrid& alpha,
    std::span<const std::vector<CellMessage>> per_path,
    const FusionOptions& opts = {});

}  // namespace rfslam
