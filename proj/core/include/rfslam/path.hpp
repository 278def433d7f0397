#pragma once

#include <vector>

#include "rfslam/geometry.hpp"

namespace rfslam {

enum class PathKind { kLos, kSingleBounce, kDoubleBounce };

const char* to_string(PathKind kind);

/// A specular propagation path from a physical anchor (PA) to the agent.
///
/// `points` runs PA -> interaction points -> agent, so a LOS path has two
/// points, a single-bounce path three and a double-bounce path four.
struct PathGeometry {
  PathKind kind = PathKind::kLos;
  std::vector<Vec2> points;
  double length = 0.0;
  double aod = 0.0;  ///< departure angle at the PA, global frame
  double aoa = 0.0;  ///< arrival angle at the agent, relative to its array

  const Vec2& pa() const { return points.front(); }
  const Vec2& agent() const { return points.back(); }

  std::size_t segment_count() const {
    return points.empty() ? 0 : points.size() - 1;
  }
  Segment segment(std::size_t i) const { return {points[i], points[i + 1]}; }

  std::size_t interaction_count() const {
    return points.size() < 2 ? 0 : points.size() - 2;
  }
  const Vec2& interaction(std::size_t i) const { return points[i + 1]; }
};

}  // namespace rfslam
