#include "rfslam/geometry.hpp"

#include <algorithm>

namespace rfslam {

Line Line::through(const Segment& s) {
  const Vec2 d = (s.p2 - s.p1).normalized();
  Line l;
  l.normal = Vec2(-d.y(), d.x());
  l.offset = l.normal.dot(s.p1);
  return l;
}

Vec2 mirror_point(const Vec2& p, const Line& line) {
  return p - 2.0 * line.signed_distance(p) * line.normal;
}

Vec2 mirror_point(const Vec2& p, const Segment& surface) {
  return mirror_point(p, Line::through(surface));
}

double point_segment_distance(const Vec2& p, const Segment& s) {
  const Vec2 d = s.p2 - s.p1;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - s.p1).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (s.p1 + t * d - p).squaredNorm();
}

std::optional<std::pair<double, double>> segment_intersection_params(
    const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
  const Vec2 r = a1 - a0;
  const Vec2 s = b1 - b0;
  const double denom = cross2(r, s);
  if (std::abs(denom) < 1e-300) return std::nullopt;
  const Vec2 q = b0 - a0;
  return std::make_pair(cross2(q, s) / denom, cross2(q, r) / denom);
}

bool segments_cross(const Segment& a, const Segment& b, double tol) {
  const auto tu = segment_intersection_params(a.p1, a.p2, b.p1, b.p2);
  if (!tu) return false;
  const double len_a = a.length();
  const double len_b = b.length();
  if (len_a <= 0.0 || len_b <= 0.0) return false;
  const double ta = tol / len_a;
  const double tb = tol / len_b;
  return tu->first > ta && tu->first < 1.0 - ta && tu->second > -tb &&
         tu->second < 1.0 + tb;
}

std::optional<Line> VertexFrame::line_of(const Vec2& vertex) const {
  const Vec2 d = vertex - reference;
  const double h = d.norm();
  if (!(h > kMinOffset)) return std::nullopt;
  Line l;
  l.normal = d / h;
  l.offset = l.normal.dot(vertex);
  return l;
}

Vec2 VertexFrame::vertex_of(const Line& line) const {
  return reference - line.signed_distance(reference) * line.normal;
}

}  // namespace rfslam
