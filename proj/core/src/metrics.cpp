#include "rfslam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rfslam {

std::vector<double> position_errors(std::span<const AgentState> est,
                                    std::span<const AgentState> truth) {
  if (est.size() != truth.size()) throw std::invalid_argument("position_errors: length mismatch");
  std::vector<double> out(est.size());
  for (std::size_t k = 0; k < est.size(); ++k) out[k] = (est[k].p - truth[k].p).norm();
  return out;
}

std::vector<double> orientation_errors(std::span<const AgentState> est,
                                       std::span<const AgentState> truth) {
  if (est.size() != truth.size())
    throw std::invalid_argument("orientation_errors: length mismatch");
  std::vector<double> out(est.size());
  for (std::size_t k = 0; k < est.size(); ++k)
    out[k] = std::abs(wrap_angle(est[k].dphi - truth[k].dphi));
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  if (v.size() % 2) return v[h];
  const double hi = v[h];
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + h));
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Hungarian method with potentials, O(rows^2 cols).
std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  if (m < n) throw std::invalid_argument("min_cost_assignment: rows > cols");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j]) out[p[j] - 1] = j - 1;
  return out;
}

double ospa(std::span<const Vec2> estimated, std::span<const Vec2> truth, double cutoff,
            double order) {
  std::span<const Vec2> a = estimated, b = truth;
  if (a.size() > b.size()) std::swap(a, b);
  const std::size_t n = b.size();
  if (n == 0) return 0.0;
  const double cp = std::pow(cutoff, order);
  double total = cp * static_cast<double>(n - a.size());
  if (!a.empty()) {
    std::vector<std::vector<double>> cost(a.size(), std::vector<double>(n));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < n; ++j)
        cost[i][j] = std::pow(std::min((a[i] - b[j]).norm(), cutoff), order);
    const auto assign = min_cost_assignment(cost);
    for (std::size_t i = 0; i < a.size(); ++i) total += cost[i][assign[i]];
  }
  return std::pow(total / static_cast<double>(n), 1.0 / order);
}

std::vector<CellIndex> rasterize_surfaces(const GridSpec& grid, std::span<const Wall> surfaces) {
  std::vector<CellIndex> out, ray;
  for (const Wall& w : surfaces) {
    trace_ray(grid, w.segment.p1, w.segment.p2, ray);
    out.insert(out.end(), ray.begin(), ray.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

OccupancyStats occupancy_stats(const OccupancyGrid& grid, std::span<const CellIndex> wall_cells,
                               double threshold) {
  std::vector<char> wall(grid.size(), 0);
  for (CellIndex c : wall_cells) wall[c] = 1;
  OccupancyStats s;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const bool occ = grid.p_occ[i] > threshold;
    if (wall[i])
      (occ ? s.true_positive : s.false_negative)++;
    else
      (occ ? s.false_positive : s.true_negative)++;
  }
  const auto tp = static_cast<double>(s.true_positive);
  s.precision = s.true_positive + s.false_positive
                    ? tp / static_cast<double>(s.true_positive + s.false_positive)
                    : 0.0;
  s.recall = s.true_positive + s.false_negative
                 ? tp / static_cast<double>(s.true_positive + s.false_negative)
                 : 0.0;
  return s;
}

}  // namespace rfslam
