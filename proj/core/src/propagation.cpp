#include "rfslam/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/non_central_chi_squared.hpp>

namespace rfslam {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal(double delta, double var) {
  return -0.5 * delta * delta / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

}  // namespace

double ura_angle_constant(int rows, int cols, double spacing_wavelengths) {
  if (rows < 1 || cols < 1 || !(spacing_wavelengths > 0.0))
    throw std::invalid_argument("ura_angle_constant: bad array");
  // Element variance along x and y (in wavelengths^2); the azimuth derivative
  // direction rotates in the array plane, so use the smaller of the two.
  auto var = [&](int n) {
    return spacing_wavelengths * spacing_wavelengths * (n * n - 1) / 12.0;
  };
  const double v = std::min(var(rows), var(cols));
  if (!(v > 0.0)) throw std::invalid_argument("ura_angle_constant: no aperture");
  return 1.0 / (2.0 * 4.0 * kPi * kPi * v);
}

RadioConstants RadioConstants::calibrated(double snr_1m_db, double carrier_hz,
                                          double bandwidth_hz) {
  RadioConstants rc;
  rc.carrier_hz = carrier_hz;
  rc.lambda_c = kSpeedOfLight / carrier_hz;
  rc.bandwidth_hz = bandwidth_hz;
  rc.p_tx = 1.0;
  rc.sigma_n = 1.0;
  // u(1 m) = sqrt(H P) lambda / (4 pi sigma) = 10^(snr/20).
  const double g = amplitude_from_db(snr_1m_db) * 4.0 * kPi * rc.sigma_n / rc.lambda_c;
  rc.h_rx = g * g / rc.p_tx;
  rc.k_array_pa = ura_angle_constant(5, 5, 0.25);
  rc.k_array_agent = rc.k_array_pa;
  return rc;
}

double RadioConstants::amplitude_gain() const {
  return std::sqrt(h_rx * p_tx) * lambda_c / (4.0 * kPi * sigma_n);
}

bool RadioConstants::valid() const {
  return lambda_c > 0.0 && p_tx > 0.0 && h_rx > 0.0 && sigma_n > 0.0 &&
         bandwidth_hz > 0.0 && k_array_pa > 0.0 && k_array_agent > 0.0;
}

double normalized_amplitude(double beta, double d, const RadioConstants& rc) {
  if (!(d > 0.0)) throw std::invalid_argument("normalized_amplitude: d <= 0");
  return beta * rc.amplitude_gain() / d;
}

double detection_probability(double u, double u_de) {
  if (!(u_de > 0.0)) return 1.0;
  u = std::max(u, 0.0);
  const double x = 2.0 * u_de * u_de;
  if (u == 0.0) return std::exp(-u_de * u_de);
  namespace bm = boost::math;
  const bm::non_central_chi_squared_distribution<double> dist(2.0, 2.0 * u * u);
  return std::clamp(bm::cdf(bm::complement(dist, x)), 0.0, 1.0);
}

DetectionModel::DetectionModel(double u_de) : u_de_(u_de), step_(1e-3) {
  // Above u_de + 9 the miss probability is below 1e-30.
  const double u_max = std::max(u_de, 0.0) + 9.0;
  const auto n = static_cast<std::size_t>(std::ceil(u_max / step_)) + 2;
  table_.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    table_[i] = detection_probability(static_cast<double>(i) * step_, u_de);
}

double DetectionModel::operator()(double u) const {
  if (!(u > 0.0)) return table_.front();
  const double x = u / step_;
  const auto i = static_cast<std::size_t>(x);
  if (i + 1 >= table_.size()) return table_.back();
  const double f = x - static_cast<double>(i);
  return table_[i] + f * (table_[i + 1] - table_[i]);
}

MeasurementVariances measurement_variances(double u, const RadioConstants& rc) {
  if (!(u > 0.0)) throw std::invalid_argument("measurement_variances: u <= 0");
  const double beff = effective_bandwidth(rc.bandwidth_hz);
  MeasurementVariances v;
  const double u2 = u * u;
  v.d = kSpeedOfLight * kSpeedOfLight / (8.0 * kPi * kPi * beff * beff * u2);
  v.aod = rc.k_array_pa / u2;
  v.aoa = rc.k_array_agent / u2;
  v.u = 0.5;
  return v;
}

double log_bessel_i0e(double x) {
  x = std::abs(x);
  if (x < 50.0) return std::log(std::cyl_bessel_i(0.0, x)) - x;
  const double r = 1.0 / (8.0 * x);
  // Asymptotic series of I0(x) e^-x sqrt(2 pi x); truncation error < 1e-10.
  const double series = 1.0 + r * (1.0 + r * (4.5 + r * (37.5 + r * 459.375)));
  return -0.5 * std::log(2.0 * kPi * x) + std::log(series);
}

double log_rice_density(double z, double u) {
  if (!(z > 0.0)) return -std::numeric_limits<double>::infinity();
  u = std::max(u, 0.0);
  // 2 z exp(-(z^2 + u^2)) I0(2 z u)
  return std::log(2.0 * z) - (z - u) * (z - u) + log_bessel_i0e(2.0 * z * u);
}

double log_truncated_amplitude_density(double z, double u, double u_de) {
  if (z < u_de) return -std::numeric_limits<double>::infinity();
  return log_rice_density(z, u) - std::log(detection_probability(u, u_de));
}

double truncated_amplitude_density(double z, double u, double u_de) {
  return std::exp(log_truncated_amplitude_density(z, u, u_de));
}

double log_wrapped_normal_density(double delta, double var) {
  delta = wrap_angle(delta);
  const double c = log_normal(delta, var);
  if (var < 0.09 && std::abs(delta) < 0.5 * kPi) return c;
  double acc = 0.0;
  for (int k = -3; k <= 3; ++k) {
    if (k == 0) continue;
    acc += std::exp(log_normal(delta + k * kTwoPi, var) - c);
  }
  return c + std::log1p(acc);
}

double wrapped_normal_density(double delta, double var) {
  return std::exp(log_wrapped_normal_density(delta, var));
}

double log_evaluate_lhf(const Measurement& z, const PathGeometry& path,
                        double u, const MeasurementVariances& var,
                        double u_de) {
  if (z.z_u < u_de) return -std::numeric_limits<double>::infinity();
  return log_normal(z.z_d - path.length, var.d) +
         log_wrapped_normal_density(z.z_aod - path.aod, var.aod) +
         log_wrapped_normal_density(z.z_aoa - path.aoa, var.aoa) +
         log_truncated_amplitude_density(z.z_u, u, u_de);
}

double evaluate_lhf(const Measurement& z, const PathGeometry& path, double u,
                    const MeasurementVariances& var, double u_de) {
  return std::exp(log_evaluate_lhf(z, path, u, var, u_de));
}

double ClutterModel::log_density(const Measurement& z) const {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!(z.z_d >= 0.0 && z.z_d <= max_distance)) return kNegInf;
  if (!(z.z_aod > -kPi && z.z_aod <= kPi && z.z_aoa > -kPi && z.z_aoa <= kPi))
    return kNegInf;
  if (z.z_u < u_de) return kNegInf;
  // Rayleigh(1/2) conditioned on exceeding u_de: 2 z exp(-(z^2 - u_de^2)).
  const double amp = std::log(2.0 * z.z_u) - (z.z_u * z.z_u - u_de * u_de);
  return -std::log(max_distance) - 2.0 * std::log(kTwoPi) + amp;
}

double ClutterModel::density(const Measurement& z) const {
  return std::exp(log_density(z));
}

double false_alarm_density(const Measurement& z, const ClutterModel& clutter) {
  return clutter.density(z);
}

bool solve_path_into(const Vec2& agent, const Vec2& pa,
                     std::span<const Reflector> bounces,
                     double agent_orientation, PathGeometry& out) {
  const std::size_t n = bounces.size();
  if (n > 2) throw std::invalid_argument("solve_path: at most two bounces");
  Vec2 images[3];
  images[0] = pa;
  for (std::size_t i = 0; i < n; ++i)
    images[i + 1] = mirror_point(images[i], bounces[i].line);

  out.kind = n == 0 ? PathKind::kLos
                    : (n == 1 ? PathKind::kSingleBounce : PathKind::kDoubleBounce);
  out.points.resize(n + 2);
  out.points.front() = pa;
  out.points.back() = agent;

  Vec2 target = agent;
  for (std::size_t k = n; k-- > 0;) {
    const Line& line = bounces[k].line;
    const double s0 = line.signed_distance(target);
    const double s1 = line.signed_distance(images[k + 1]);
    if (!(s0 * s1 < 0.0)) return false;
    const double t = s0 / (s0 - s1);
    const Vec2 ip = target + t * (images[k + 1] - target);
    if (bounces[k].extent) {
      const Segment& seg = *bounces[k].extent;
      const Vec2 d = seg.p2 - seg.p1;
      const double len2 = d.squaredNorm();
      const double tau = (ip - seg.p1).dot(d) / len2;
      const double tol = 1e-12;
      if (tau < -tol || tau > 1.0 + tol) return false;
    }
    out.points[k + 1] = ip;
    target = ip;
  }

  out.length = (agent - images[n]).norm();
  if (!(out.length > 1e-12)) return false;
  out.aod = bearing(pa, out.points[1]);
  out.aoa = wrap_angle(bearing(agent, out.points[n]) - agent_orientation);
  return true;
}

std::optional<PathGeometry> solve_path(const Vec2& agent, const Vec2& pa,
                                       std::span<const Reflector> bounces,
                                       double agent_orientation) {
  PathGeometry g;
  if (!solve_path_into(agent, pa, bounces, agent_orientation, g))
    return std::nullopt;
  return g;
}

}  // namespace rfslam
