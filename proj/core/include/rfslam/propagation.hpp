#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/path.hpp"

namespace rfslam {

inline constexpr double kSpeedOfLight = 299792458.0;

/// One channel-estimate tuple. Angles are wrapped to (-pi, pi]; the AoA is
/// relative to the agent's array orientation.
struct Measurement {
  double z_d = 0.0;
  double z_aod = 0.0;
  double z_aoa = 0.0;
  double z_u = 0.0;
};

/// Link budget and array constants.
struct RadioConstants {
  double carrier_hz = 6e9;
  double lambda_c = kSpeedOfLight / 6e9;
  double p_tx = 1.0;
  double h_rx = 1.0;
  double sigma_n = 1.0;
  double bandwidth_hz = 1e9;
  double k_array_pa = 0.0;     ///< sigma_aod^2 * u^2
  double k_array_agent = 0.0;  ///< sigma_aoa^2 * u^2

  /// Constants with H_rx chosen so that u(1 m, beta = 1) equals the given
  /// output SNR at 1 m, and both arrays set to a 5x5 URA with lambda/4 spacing.
  static RadioConstants calibrated(double snr_1m_db, double carrier_hz = 6e9,
                                   double bandwidth_hz = 1e9);

  /// u * d for beta = 1.
  double amplitude_gain() const;
  bool valid() const;
};

/// Angle-variance constant of a planar uniform rectangular array from its
/// aperture second moment: 1 / (2 (2 pi / lambda)^2 var), `var` being the
/// element-position variance along the steering derivative.
double ura_angle_constant(int rows, int cols, double spacing_wavelengths);

/// RMS bandwidth of a flat spectrum of width `bandwidth_hz`.
inline double effective_bandwidth(double bandwidth_hz) {
  return bandwidth_hz / std::sqrt(12.0);
}

/// Converts a dB power ratio into a normalized amplitude (sqrt of SNR).
inline double amplitude_from_db(double db) { return std::pow(10.0, db / 20.0); }

/// Free-space amplitude u = beta sqrt(H P) lambda / (4 pi d sigma_n).
/// Throws std::invalid_argument for d <= 0.
double normalized_amplitude(double beta, double d, const RadioConstants& rc);

/// P(|u + n| >= u_de) for circular complex noise with variance 1/2 per
/// component, i.e. Marcum Q1(sqrt(2) u, sqrt(2) u_de).
double detection_probability(double u, double u_de);

/// Tabulated detection_probability for hot loops (linear interpolation on a
/// 1e-3 grid; absolute error below 1e-6).
class DetectionModel {
 public:
  explicit DetectionModel(double u_de);

  double u_de() const { return u_de_; }
  double operator()(double u) const;

 private:
  double u_de_;
  double step_;
  std::vector<double> table_;
};

struct MeasurementVariances {
  double d = 0.0;
  double aod = 0.0;
  double aoa = 0.0;
  double u = 0.5;
};

/// CRLB-shaped variances: sigma_d^2 = c^2 / (8 pi^2 B_eff^2 u^2),
/// sigma_angle^2 = k_array / u^2, sigma_u^2 = 1/2. Throws for u <= 0.
MeasurementVariances measurement_variances(double u, const RadioConstants& rc);

/// log of the Rice density of an amplitude z given noiseless amplitude u and
/// noise variance 1/2 per component.
double log_rice_density(double z, double u);
/// log I0(x) - x, accurate for all x >= 0.
double log_bessel_i0e(double x);

/// Rice amplitude density truncated to [u_de, inf) and renormalized by
/// p_d(u); -inf below u_de.
double log_truncated_amplitude_density(double z, double u, double u_de);
double truncated_amplitude_density(double z, double u, double u_de);

/// Wrapped normal density on the circle.
double wrapped_normal_density(double delta, double var);
double log_wrapped_normal_density(double delta, double var);

/// Measurement likelihood for a path with noiseless amplitude u: normal in
/// distance, wrapped normal in both angles, and a Rice amplitude density
/// truncated to [u_de, inf) and renormalized by p_d(u).
double evaluate_lhf(const Measurement& z, const PathGeometry& path, double u,
                    const MeasurementVariances& var, double u_de);
double log_evaluate_lhf(const Measurement& z, const PathGeometry& path,
                        double u, const MeasurementVariances& var, double u_de);

/// Clutter model: uniform in distance on [0, max_distance] and in both
/// angles, Rayleigh-tail amplitude above u_de.
struct ClutterModel {
  double mu_fa = 1.0;
  double max_distance = 30.0;
  double u_de = 2.0;

  double density(const Measurement& z) const;
  double log_density(const Measurement& z) const;
  double intensity(const Measurement& z) const { return mu_fa * density(z); }
};

double false_alarm_density(const Measurement& z, const ClutterModel& clutter);

/// A specular reflector. SFV lines are unbounded; environment walls carry
/// their finite extent.
struct Reflector {
  Line line;
  std::optional<Segment> extent;

  static Reflector wall(const Segment& s) { return {Line::through(s), s}; }
  static Reflector unbounded(const Line& l) { return {l, std::nullopt}; }
};

/// Image-source path from `pa` to `agent` via 0-2 reflectors given in bounce
/// order from the PA. Returns nullopt when a reflection point misses its
/// reflector or the geometry admits no specular path.
std::optional<PathGeometry> solve_path(const Vec2& agent, const Vec2& pa,
                                       std::span<const Reflector> bounces,
                                       double agent_orientation = 0.0);

/// Allocation-free variant used per particle. Returns false on a miss.
bool solve_path_into(const Vec2& agent, const Vec2& pa,
                     std::span<const Reflector> bounces,
                     double agent_orientation, PathGeometry& out);

}  // namespace rfslam
