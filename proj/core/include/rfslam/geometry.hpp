#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>

namespace rfslam {

using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  return a;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

inline double bearing(const Vec2& from, const Vec2& to) {
  const Vec2 d = to - from;
  return std::atan2(d.y(), d.x());
}

inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

struct Segment {
  Vec2 p1;
  Vec2 p2;

  double length() const { return (p2 - p1).norm(); }
};

/// Infinite line n.x = offset with unit normal n.
struct Line {
  Vec2 normal;
  double offset = 0.0;

  static Line through(const Segment& s);

  double signed_distance(const Vec2& p) const { return normal.dot(p) - offset; }
};

/// Reflection of p across the infinite line carrying `surface`.
Vec2 mirror_point(const Vec2& p, const Segment& surface);
Vec2 mirror_point(const Vec2& p, const Line& line);

/// Squared distance from p to the closed segment s.
double point_segment_distance(const Vec2& p, const Segment& s);

/// Intersection parameters of segments (a0,a1) and (b0,b1); nullopt when
/// parallel. Returned as (t along a, u along b), both unclamped.
std::optional<std::pair<double, double>> segment_intersection_params(
    const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1);

/// True when the open segments properly cross, ignoring contact within `tol`
/// (in metres) of either endpoint of the first segment.
bool segments_cross(const Segment& a, const Segment& b, double tol);

/// A surface is parameterized by its "vertex": the foot of the perpendicular
/// dropped from a fixed reference point onto the surface line. The vertex is a
/// point on the surface that identifies the line uniquely whenever the line
/// does not pass through the reference point.
struct VertexFrame {
  Vec2 reference = Vec2::Zero();

  /// Minimum distance between vertex and reference for a usable line.
  static constexpr double kMinOffset = 1e-6;

  std::optional<Line> line_of(const Vec2& vertex) const;
  Vec2 vertex_of(const Line& line) const;
  Vec2 vertex_of(const Segment& s) const { return vertex_of(Line::through(s)); }
};

}  // namespace rfslam
