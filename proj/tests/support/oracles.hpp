#pragma once

// Brute-force reference computations. None of these call into the library's
// message passing code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "rfslam/association.hpp"
#include "rfslam/grid_map.hpp"

namespace oracle {

using rfslam::CellIndex;
using rfslam::CellSets;

inline bool contains(const std::vector<CellIndex>& v, CellIndex c) {
  return std::find(v.begin(), v.end(), c) != v.end();
}

/// True when configuration `occ` (bit i = cell i occupied) supports the path.
inline bool supports(std::uint32_t occ, const CellSets& sets) {
  for (CellIndex c : sets.traversed)
    if (occ >> c & 1u) return false;
  if (!sets.requires_hit) return true;
  for (CellIndex c : sets.hit)
    if (occ >> c & 1u) return true;
  return false;
}

inline double config_probability(std::uint32_t occ, const std::vector<double>& p_occ) {
  double w = 1.0;
  for (std::size_t i = 0; i < p_occ.size(); ++i)
    w *= (occ >> i & 1u) ? p_occ[i] : 1.0 - p_occ[i];
  return w;
}

/// Sum over supporting configurations of prod_i alpha(o_i).
inline double validity(const std::vector<double>& p_occ, const CellSets& sets) {
  double s = 0.0;
  const std::uint32_t n = 1u << p_occ.size();
  for (std::uint32_t occ = 0; occ < n; ++occ)
    if (supports(occ, sets)) s += config_probability(occ, p_occ);
  return s;
}

/// Exact posterior p(o_i = 1) for one path factor
///   f(o, a) = [o in V] rho(a) + [a = 0] r_bar
/// with external association message eta(a).
inline std::vector<double> cell_marginals(const std::vector<double>& p_occ,
                                          const CellSets& sets,
                                          const std::vector<double>& eta,
                                          const std::vector<double>& rho,
                                          double r_bar) {
  const std::size_t q = p_occ.size();
  std::vector<double> m1(q, 0.0);
  double z = 0.0;
  double eta_rho = 0.0;
  for (std::size_t a = 0; a < eta.size(); ++a) eta_rho += eta[a] * rho[a];
  const std::uint32_t n = 1u << q;
  for (std::uint32_t occ = 0; occ < n; ++occ) {
    const double f = (supports(occ, sets) ? eta_rho : 0.0) + eta[0] * r_bar;
    const double w = config_probability(occ, p_occ) * f;
    z += w;
    for (std::size_t i = 0; i < q; ++i)
      if (occ >> i & 1u) m1[i] += w;
  }
  for (double& v : m1) v /= z;
  return m1;
}

/// Exact association marginals p(a_k = a), row-major K x (M + 1), by
/// enumerating every one-to-one map of paths to measurements.
inline std::vector<double> association_marginals(const rfslam::AssociationProblem& p) {
  const std::size_t K = p.paths, M = p.measurements, W = M + 1;
  std::vector<double> marg(K * W, 0.0);
  std::vector<std::size_t> a(K, 0);
  double z = 0.0;
  std::function<void(std::size_t, std::uint32_t)> rec = [&](std::size_t k, std::uint32_t used) {
    if (k == K) {
      double w = 1.0;
      for (std::size_t i = 0; i < K; ++i) w *= p.at(i, a[i]);
      for (std::size_t m = 0; m < M; ++m)
        if (!(used >> m & 1u)) w *= p.clutter[m] + p.new_evidence[m];
      z += w;
      for (std::size_t i = 0; i < K; ++i) marg[i * W + a[i]] += w;
      return;
    }
    a[k] = 0;
    rec(k + 1, used);
    for (std::size_t m = 0; m < M; ++m) {
      if (used >> m & 1u) continue;
      a[k] = m + 1;
      rec(k + 1, used | 1u << m);
    }
  };
  rec(0, 0);
  for (double& v : marg) v /= z;
  return marg;
}

/// Cells containing a point of the segment sampled every `step` metres.
inline std::set<CellIndex> sampled_cells(const rfslam::GridSpec& g, const rfslam::Vec2& a,
                                         const rfslam::Vec2& b, double step) {
  std::set<CellIndex> out;
  const double len = (b - a).norm();
  const auto n = static_cast<std::size_t>(std::ceil(len / step));
  for (std::size_t k = 1; k < n; ++k) {
    const auto c = g.locate(a + (static_cast<double>(k) / static_cast<double>(n)) * (b - a));
    if (c) out.insert(*c);
  }
  return out;
}

/// Length of the segment inside cell c (Liang-Barsky clip).
inline double clipped_length(const rfslam::GridSpec& g, CellIndex c, const rfslam::Vec2& a,
                             const rfslam::Vec2& b) {
  const rfslam::Vec2 lo = g.origin + g.cell_size * rfslam::Vec2(g.col_of(c), g.row_of(c));
  const rfslam::Vec2 hi = lo + rfslam::Vec2::Constant(g.cell_size);
  const rfslam::Vec2 d = b - a;
  double t0 = 0.0, t1 = 1.0;
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (a[k] < lo[k] || a[k] > hi[k]) return 0.0;
      continue;
    }
    double ta = (lo[k] - a[k]) / d[k], tb = (hi[k] - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0 ? (t1 - t0) * d.norm() : 0.0;
}

}  // namespace oracle
