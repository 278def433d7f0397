#include "rfslam/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rfslam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Start cell along one axis for a ray entering at local coordinate s.
int start_cell(double s, double dir, int n) {
  double f = std::floor(s);
  if (dir < 0.0 && s == f) f -= 1.0;
  return std::clamp(static_cast<int>(f), 0, n - 1);
}

void append_disc(const GridSpec& grid, const Vec2& c, double radius,
                 std::vector<CellIndex>& out) {
  const double cs = grid.cell_size;
  const double tol = 1e-9 * cs;
  const Vec2 lo = (c - grid.origin) / cs - Vec2::Constant(radius / cs + 1.0);
  const Vec2 hi = (c - grid.origin) / cs + Vec2::Constant(radius / cs + 1.0);
  const int c0 = std::max(0, static_cast<int>(std::floor(lo.x())));
  const int c1 = std::min(grid.nx - 1, static_cast<int>(std::floor(hi.x())));
  const int r0 = std::max(0, static_cast<int>(std::floor(lo.y())));
  const int r1 = std::min(grid.ny - 1, static_cast<int>(std::floor(hi.y())));
  const double r2 = (radius + tol) * (radius + tol);
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col) {
      const Vec2 center = grid.origin + cs * Vec2(col + 0.5, row + 0.5);
      if ((center - c).squaredNorm() <= r2) out.push_back(grid.index(row, col));
    }
  }
}

void sort_unique(std::vector<CellIndex>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : -kInf; }

// Unit normal of the reflecting surface at path point k (an interaction):
// the bisector of the directions towards the neighbouring points.
bool surface_normal(const PathGeometry& path, std::size_t k, Vec2& normal) {
  if (k == 0 || k + 1 >= path.points.size()) return false;
  const Vec2& p = path.points[k];
  const Vec2 n = (path.points[k - 1] - p).normalized() + (path.points[k + 1] - p).normalized();
  if (!(n.norm() > 0.0)) return false;
  normal = n.normalized();
  return true;
}

// True when the cell, grown by margin along n, intersects the line through p
// with unit normal n.
bool straddles(const GridSpec& grid, CellIndex c, const Vec2& p, const Vec2& n,
               double margin = 0.0) {
  const double half = 0.5 * grid.cell_size * (std::abs(n.x()) + std::abs(n.y()));
  return std::abs(n.dot(grid.cell_center(c) - p)) < half + margin;
}

// Surface lines at the interactions bounding segment s.
struct SurfaceGuard {
  Vec2 point[2];
  Vec2 normal[2];
  int count = 0;
  double margin = 0.0;

  SurfaceGuard(const PathGeometry& path, std::size_t s, double margin_) : margin(margin_) {
    for (std::size_t k : {s, s + 1}) {
      if (!surface_normal(path, k, normal[count])) continue;
      point[count] = path.points[k];
      ++count;
    }
  }

  bool covers(const GridSpec& grid, CellIndex c) const {
    for (int k = 0; k < count; ++k)
      if (straddles(grid, c, point[k], normal[k], margin)) return true;
    return false;
  }
};

// Hit-disc cells of interaction i, optionally restricted to the surface.
void append_hit_cells(const GridSpec& grid, const PathGeometry& path, std::size_t i,
                      double radius, bool on_surface, std::vector<CellIndex>& out) {
  const std::size_t first = out.size();
  append_disc(grid, path.interaction(i), radius, out);
  Vec2 n;
  if (!on_surface || !surface_normal(path, i + 1, n)) return;
  const Vec2& p = path.interaction(i);
  out.erase(std::remove_if(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                           [&](CellIndex c) { return !straddles(grid, c, p, n); }),
            out.end());
}

}  // namespace

std::optional<CellIndex> GridSpec::locate(const Vec2& p) const {
  const Vec2 local = (p - origin) / cell_size;
  const double fc = std::floor(local.x());
  const double fr = std::floor(local.y());
  if (!(fc >= 0.0 && fc < nx && fr >= 0.0 && fr < ny)) return std::nullopt;
  return index(static_cast<int>(fr), static_cast<int>(fc));
}

GridSpec GridSpec::covering(const Vec2& lo, const Vec2& hi, double cell_size) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell_size must be > 0");
  GridSpec g;
  g.origin = lo;
  g.cell_size = cell_size;
  g.nx = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / cell_size - 1e-9)));
  g.ny = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / cell_size - 1e-9)));
  return g;
}

std::vector<CellIndex> trace_ray(const GridSpec& grid, const Vec2& a,
                                 const Vec2& b) {
  std::vector<CellIndex> out;
  trace_ray(grid, a, b, out);
  return out;
}

void trace_ray(const GridSpec& grid, const Vec2& a, const Vec2& b,
               std::vector<CellIndex>& out) {
  out.clear();
  const Vec2 d = b - a;
  if (d.x() == 0.0 && d.y() == 0.0) {
    if (auto c = grid.locate(a)) out.push_back(*c);
    return;
  }

  // Work in cell units relative to the origin.
  const Vec2 p = (a - grid.origin) / grid.cell_size;
  const Vec2 dd = d / grid.cell_size;
  const double extent[2] = {static_cast<double>(grid.nx),
                            static_cast<double>(grid.ny)};

  double t0 = 0.0;
  double t1 = 1.0;
  for (int ax = 0; ax < 2; ++ax) {
    if (dd[ax] == 0.0) {
      if (p[ax] < 0.0 || p[ax] >= extent[ax]) return;
      continue;
    }
    double ta = (0.0 - p[ax]) / dd[ax];
    double tb = (extent[ax] - p[ax]) / dd[ax];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return;

  const Vec2 s = p + t0 * dd;
  int ix = start_cell(s.x(), dd.x(), grid.nx);
  int iy = start_cell(s.y(), dd.y(), grid.ny);
  const int sx = dd.x() > 0.0 ? 1 : -1;
  const int sy = dd.y() > 0.0 ? 1 : -1;

  double tmax_x = kInf;
  double tmax_y = kInf;
  double tdelta_x = kInf;
  double tdelta_y = kInf;
  if (dd.x() != 0.0) {
    tmax_x = ((sx > 0 ? ix + 1 : ix) - p.x()) / dd.x();
    tdelta_x = 1.0 / std::abs(dd.x());
  }
  if (dd.y() != 0.0) {
    tmax_y = ((sy > 0 ? iy + 1 : iy) - p.y()) / dd.y();
    tdelta_y = 1.0 / std::abs(dd.y());
  }

  for (;;) {
    out.push_back(grid.index(iy, ix));
    const double tnext = std::min(tmax_x, tmax_y);
    if (tnext >= t1) break;
    if (tmax_x < tmax_y) {
      ix += sx;
      tmax_x += tdelta_x;
    } else if (tmax_y < tmax_x) {
      iy += sy;
      tmax_y += tdelta_y;
    } else {
      // Exact corner crossing: the diagonal neighbours are only touched at a
      // point.
      ix += sx;
      iy += sy;
      tmax_x += tdelta_x;
      tmax_y += tdelta_y;
    }
    if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny) break;
  }
}

CellSets classify_cells(const GridSpec& grid, const PathGeometry& path,
                        ClassifyOptions opts) {
  CellSets out;
  std::vector<CellIndex> scratch;
  classify_cells(grid, path, opts, out, scratch);
  return out;
}

void classify_cells(const GridSpec& grid, const PathGeometry& path,
                    const ClassifyOptions& opts, CellSets& out,
                    std::vector<CellIndex>& scratch) {
  out.traversed.clear();
  out.hit.clear();
  out.requires_hit = path.interaction_count() > 0;
  if (path.points.size() < 2) return;

  const double cs = grid.cell_size;
  const double hit_radius = opts.hit_radius > 0.0 ? opts.hit_radius : 1.5 * cs;
  const double guard = opts.endpoint_guard > 0.0 ? opts.endpoint_guard : cs;

  for (std::size_t i = 0; i < path.interaction_count(); ++i) {
    append_hit_cells(grid, path, i, hit_radius, opts.hit_on_surface, out.hit);
  }
  sort_unique(out.hit);

  for (std::size_t s = 0; s < path.segment_count(); ++s) {
    trace_ray(grid, path.points[s], path.points[s + 1], scratch);
    if (opts.surface_guard) {
      const double margin = opts.surface_margin > 0.0 ? opts.surface_margin : cs;
      const SurfaceGuard sg(path, s, margin);
      for (CellIndex c : scratch)
        if (!sg.covers(grid, c)) out.traversed.push_back(c);
    } else {
      out.traversed.insert(out.traversed.end(), scratch.begin(), scratch.end());
    }
  }
  sort_unique(out.traversed);

  const double g2 = (guard + 1e-9 * cs) * (guard + 1e-9 * cs);
  const Vec2& e0 = path.pa();
  const Vec2& e1 = path.agent();
  auto drop = [&](CellIndex c) {
    if (std::binary_search(out.hit.begin(), out.hit.end(), c)) return true;
    const Vec2 center = grid.cell_center(c);
    return (center - e0).squaredNorm() <= g2 || (center - e1).squaredNorm() <= g2;
  };
  out.traversed.erase(
      std::remove_if(out.traversed.begin(), out.traversed.end(), drop),
      out.traversed.end());
}

CellClassifier::CellClassifier(const GridSpec& grid, const ClassifyOptions& opts)
    : grid_(grid), stamp_(grid.size(), 0) {
  const double cs = grid.cell_size;
  hit_radius_ = opts.hit_radius > 0.0 ? opts.hit_radius : 1.5 * cs;
  surface_guard_ = opts.surface_guard;
  surface_margin_ = opts.surface_margin > 0.0 ? opts.surface_margin : cs;
  hit_on_surface_ = opts.hit_on_surface;
  const double guard = opts.endpoint_guard > 0.0 ? opts.endpoint_guard : cs;
  guard2_ = (guard + 1e-9 * cs) * (guard + 1e-9 * cs);
}

void CellClassifier::next_epoch() {
  if (++epoch_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    epoch_ = 1;
  }
}

void CellClassifier::classify(const PathGeometry& path, CellSets& out) {
  out.traversed.clear();
  out.hit.clear();
  out.requires_hit = path.interaction_count() > 0;
  if (path.points.size() < 2) return;
  next_epoch();

  for (std::size_t i = 0; i < path.interaction_count(); ++i) {
    scratch_.clear();
    append_hit_cells(grid_, path, i, hit_radius_, hit_on_surface_, scratch_);
    for (CellIndex c : scratch_) {
      if (stamp_[c] == epoch_) continue;
      stamp_[c] = epoch_;
      out.hit.push_back(c);
    }
  }

  const Vec2& e0 = path.pa();
  const Vec2& e1 = path.agent();
  for (std::size_t s = 0; s < path.segment_count(); ++s) {
    trace_ray(grid_, path.points[s], path.points[s + 1], scratch_);
    const SurfaceGuard sg(path, surface_guard_ ? s : path.points.size(), surface_margin_);
    for (CellIndex c : scratch_) {
      if (stamp_[c] == epoch_) continue;
      if (sg.covers(grid_, c)) continue;
      stamp_[c] = epoch_;
      const Vec2 center = grid_.cell_center(c);
      if ((center - e0).squaredNorm() <= guard2_ ||
          (center - e1).squaredNorm() <= guard2_)
        continue;
      out.traversed.push_back(c);
    }
  }
}

ValidityTable::ValidityTable(const OccupancyGrid& alpha)
    : log_free(alpha.size()) {
  for (std::size_t i = 0; i < alpha.size(); ++i)
    log_free[i] = safe_log(1.0 - alpha.p_occ[i]);
}

double log_path_validity_message(const ValidityTable& table,
                                 const CellSets& sets) {
  double log_free = 0.0;
  for (CellIndex i : sets.traversed) log_free += table.log_free[i];
  if (!sets.requires_hit) return log_free;
  if (sets.hit.empty()) return -kInf;
  double log_all_free = 0.0;
  for (CellIndex i : sets.hit) log_all_free += table.log_free[i];
  return log_free + safe_log(-std::expm1(log_all_free));
}

double log_relative_validity(const ValidityTable& table, const CellSets& sets,
                             double p_ref) {
  const double log_ref = std::log1p(-p_ref);
  double acc = 0.0;
  for (CellIndex i : sets.traversed) acc += std::min(0.0, table.log_free[i] - log_ref);
  if (!sets.requires_hit) return acc;
  if (sets.hit.empty()) return -kInf;
  double log_all_free = 0.0;
  for (CellIndex i : sets.hit) log_all_free += table.log_free[i];
  const double ref_all_free = log_ref * static_cast<double>(sets.hit.size());
  acc += safe_log(-std::expm1(log_all_free)) - safe_log(-std::expm1(ref_all_free));
  return std::min(0.0, acc);
}

double log_path_validity_message(const OccupancyGrid& alpha,
                                 const CellSets& sets) {
  double log_free = 0.0;
  for (CellIndex i : sets.traversed) log_free += safe_log(alpha.free(i));
  if (!sets.requires_hit) return log_free;
  if (sets.hit.empty()) return -kInf;
  double log_all_free = 0.0;
  for (CellIndex i : sets.hit) log_all_free += safe_log(alpha.free(i));
  // 1 - prod(free) computed as -expm1(log prod(free)).
  const double hit_factor = -std::expm1(log_all_free);
  return log_free + safe_log(hit_factor);
}

double path_validity_message(const OccupancyGrid& alpha, const CellSets& sets) {
  const double v = std::exp(log_path_validity_message(alpha, sets));
  return std::clamp(v, 0.0, 1.0);
}

OccupancyGrid predict_grid(const OccupancyGrid& prev, double flip_probability) {
  if (flip_probability == 0.0) return prev;
  OccupancyGrid out = prev;
  const double eps = flip_probability;
  for (double& p : out.p_occ) p = eps + (1.0 - 2.0 * eps) * p;
  return out;
}

namespace {

enum class CellClass { kTraversed, kHit, kNone };

CellClass class_of(CellIndex cell, const CellSets& sets) {
  if (std::binary_search(sets.traversed.begin(), sets.traversed.end(), cell))
    return CellClass::kTraversed;
  if (std::binary_search(sets.hit.begin(), sets.hit.end(), cell))
    return CellClass::kHit;
  return CellClass::kNone;
}

// Conditional support factors P(V | o_i) / alpha_V for a hit cell under the
// exact form: {o_i = 0, o_i = 1}.
std::array<double, 2> exact_hit_factors(CellIndex cell, const CellSets& sets,
                                        const OccupancyGrid& alpha) {
  double all_free = 1.0;
  double others_free = 1.0;
  for (CellIndex k : sets.hit) {
    all_free *= alpha.free(k);
    if (k != cell) others_free *= alpha.free(k);
  }
  const double support = 1.0 - all_free;
  if (support < kDivisionGuard) return {0.0, 0.0};
  return {(1.0 - others_free) / support, 1.0 / support};
}

}  // namespace

CellMessagePair cell_messages(CellIndex cell, const CellSets& sets,
                              const OccupancyGrid& alpha,
                              std::span<const double> eta,
                              std::span<const double> evidence,
                              double nonexistence, HitMessageForm form) {
  if (eta.size() != evidence.size() || eta.empty())
    throw std::invalid_argument("cell_messages: eta/evidence size mismatch");
  double weighted = 0.0;
  for (std::size_t a = 0; a < eta.size(); ++a) weighted += eta[a] * evidence[a];
  const double miss = eta[0] * nonexistence;

  switch (class_of(cell, sets)) {
    case CellClass::kTraversed: {
      const double a0 = alpha.free(cell);
      const double k0 = a0 < kDivisionGuard ? 0.0 : weighted / a0;
      return {k0 + miss, miss};
    }
    case CellClass::kHit: {
      if (form == HitMessageForm::kExact) {
        const auto f = exact_hit_factors(cell, sets, alpha);
        return {weighted * f[0] + miss, weighted * f[1] + miss};
      }
      const double a1 = alpha.occupied(cell);
      const double k1 = a1 < kDivisionGuard ? 0.0 : weighted / a1;
      return {miss, k1 + miss};
    }
    case CellClass::kNone:
      break;
  }
  return {weighted + miss, weighted + miss};
}

PathCellAccumulator::PathCellAccumulator(const OccupancyGrid& alpha,
                                         HitMessageForm form, double reference)
    : alpha_(&alpha),
      form_(form),
      ref_free_(reference > 0.0 ? 1.0 - reference : 0.0),
      delta0_(alpha.size(), 0.0),
      delta1_(alpha.size(), 0.0),
      mark_(alpha.size(), 0) {}

void PathCellAccumulator::reset() {
  for (CellIndex c : touched_) {
    delta0_[c] = 0.0;
    delta1_[c] = 0.0;
    mark_[c] = 0;
  }
  touched_.clear();
  total_ = 0.0;
}

void PathCellAccumulator::add_particle(double e, const CellSets& sets) {
  if (!(e > 0.0)) return;
  total_ += e;
  auto touch = [&](CellIndex c) {
    if (!mark_[c]) {
      mark_[c] = 1;
      touched_.push_back(c);
    }
  };
  for (CellIndex c : sets.traversed) {
    touch(c);
    double a0 = alpha_->free(c);
    if (ref_free_ > 0.0) a0 = std::min(1.0, a0 / ref_free_);
    delta0_[c] += (a0 < kDivisionGuard ? 0.0 : e / a0) - e;
    delta1_[c] -= e;
  }
  for (CellIndex c : sets.hit) {
    touch(c);
    if (form_ == HitMessageForm::kExact) {
      const auto f = exact_hit_factors(c, sets, *alpha_);
      delta0_[c] += e * f[0] - e;
      delta1_[c] += e * f[1] - e;
    } else {
      const double a1 = alpha_->occupied(c);
      delta0_[c] -= e;
      delta1_[c] += (a1 < kDivisionGuard ? 0.0 : e / a1) - e;
    }
  }
}

std::vector<CellMessage> PathCellAccumulator::finish(double miss) {
  std::sort(touched_.begin(), touched_.end());
  std::vector<CellMessage> out;
  out.reserve(touched_.size());
  const double base = total_ + miss;
  for (CellIndex c : touched_) {
    // Cancellation can leave tiny negative residues.
    const double k0 = std::max(0.0, base + delta0_[c]);
    const double k1 = std::max(0.0, base + delta1_[c]);
    out.push_back({c, k0, k1});
  }
  return out;
}

OccupancyGrid fuse_cell_beliefs(
    const OccupancyGrid& alpha,
    std::span<const std::vector<CellMessage>> per_path,
    const FusionOptions& opts) {
  const std::size_t q = alpha.size();
  std::vector<double> log0(q, 0.0);
  std::vector<double> log1(q, 0.0);
  std::vector<std::uint8_t> touched(q, 0);

  for (const auto& messages : per_path) {
    for (const CellMessage& m : messages) {
      if (!(m.k0 > 0.0) && !(m.k1 > 0.0)) continue;
      log0[m.cell] += safe_log(m.k0);
      log1[m.cell] += safe_log(m.k1);
      touched[m.cell] = 1;
    }
  }

  OccupancyGrid out = alpha;
  for (std::size_t i = 0; i < q; ++i) {
    double p = alpha.p_occ[i];
    if (touched[i]) {
      const double l0 = safe_log(1.0 - alpha.p_occ[i]) + log0[i];
      const double l1 = safe_log(alpha.p_occ[i]) + log1[i];
      const double m = std::max(l0, l1);
      if (std::isfinite(m)) {
        const double e0 = std::exp(l0 - m);
        const double e1 = std::exp(l1 - m);
        const double v = e1 / (e0 + e1);
        if (std::isfinite(v)) p = v;
      }
    }
    if (opts.occupancy_floor > 0.0) p = std::max(p, opts.occupancy_floor);
    out.p_occ[i] = p;
  }
  return out;
}

const char* to_string(PathKind kind) {
  switch (kind) {
    case PathKind::kLos:
      return "los";
    case PathKind::kSingleBounce:
      return "single";
    case PathKind::kDoubleBounce:
      return "double";
  }
  return "unknown";
}

}  // namespace rfslam
