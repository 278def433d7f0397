#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "rfslam/propagation.hpp"

using namespace rfslam;

namespace {

const RadioConstants kRadio = RadioConstants::calibrated(30.0);

// Rice exceedance by quadrature of the Rice density, independent of the
// Marcum-Q path used by the library.
double rice_exceedance(double u, double u_de) {
  auto f = [u](double z) {
    return 2.0 * z * std::exp(-(z - u) * (z - u)) * std::cyl_bessel_i(0.0, 2.0 * z * u) *
           std::exp(-2.0 * z * u);
  };
  return 1.0 - boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, u_de, 15, 1e-14);
}

}  // namespace

TEST(MirrorPoint, AcrossXAxis) {
  const Vec2 m = mirror_point(Vec2(1.0, 1.0), Segment{{-2.0, 0.0}, {3.0, 0.0}});
  EXPECT_DOUBLE_EQ(m.x(), 1.0);
  EXPECT_DOUBLE_EQ(m.y(), -1.0);
}

TEST(MirrorPoint, InvolutionAndEqualDistance) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int t = 0; t < 500; ++t) {
    const Vec2 p(u(rng), u(rng));
    const Segment s{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (s.length() < 1e-3) continue;
    const Vec2 m = mirror_point(p, s);
    const Vec2 back = mirror_point(m, s);
    EXPECT_NEAR((back - p).norm(), 0.0, 1e-11);
    // Point-line distance from the cross product.
    const Vec2 d = (s.p2 - s.p1).normalized();
    const double dp = std::abs(cross2(d, p - s.p1));
    const double dm = std::abs(cross2(d, m - s.p1));
    EXPECT_NEAR(dp, dm, 1e-11);
  }
}

TEST(SolvePath, Los) {
  const auto g = solve_path({3.0, 4.0}, {0.0, 0.0}, {});
  ASSERT_TRUE(g);
  EXPECT_DOUBLE_EQ(g->length, 5.0);
  EXPECT_DOUBLE_EQ(g->aod, std::atan2(4.0, 3.0));
  EXPECT_EQ(g->interaction_count(), 0u);
}

TEST(SolvePath, LosSwapSymmetry) {
  const Vec2 a(1.2, -0.7), b(-2.5, 3.1);
  const auto ab = solve_path(a, b, {});
  const auto ba = solve_path(b, a, {});
  EXPECT_DOUBLE_EQ(ab->length, ba->length);
  EXPECT_NEAR(ab->aod, ba->aoa, 1e-15);
  EXPECT_NEAR(ab->aoa, ba->aod, 1e-15);
}

TEST(SolvePath, SingleBounceHandValue) {
  const Reflector wall = Reflector::wall({{-10.0, 2.0}, {10.0, 2.0}});
  const auto g = solve_path({4.0, 0.0}, {0.0, 0.0}, std::span(&wall, 1));
  ASSERT_TRUE(g);
  EXPECT_NEAR(g->length, std::sqrt(32.0), 1e-14);
  EXPECT_NEAR(g->interaction(0).x(), 2.0, 1e-14);
  EXPECT_NEAR(g->interaction(0).y(), 2.0, 1e-14);
  EXPECT_NEAR(g->aod, kPi / 4.0, 1e-14);
  EXPECT_NEAR(g->aoa, 3.0 * kPi / 4.0, 1e-14);
}

TEST(SolvePath, MissBeyondSegmentEnd) {
  const Reflector wall = Reflector::wall({{-1.0, 2.0}, {1.0, 2.0}});
  EXPECT_FALSE(solve_path({4.0, 0.0}, {0.0, 0.0}, std::span(&wall, 1)));
}

TEST(SolvePath, AoaIsRelativeToOrientation) {
  const auto g = solve_path({0.0, 0.0}, {0.0, 5.0}, {}, 0.5);
  ASSERT_TRUE(g);
  EXPECT_NEAR(g->aoa, kPi / 2.0 - 0.5, 1e-15);
}

TEST(SolvePath, LengthEqualsImageDistance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 4.5);
  const Reflector a = Reflector::unbounded(Line::through({{0, 0}, {5, 0}}));
  const Reflector b = Reflector::unbounded(Line::through({{5, 0}, {5, 5}}));
  // Inside a corner exactly one bounce order exists; the double image is the
  // point reflection through the corner either way.
  const Reflector orders[2][2] = {{a, b}, {b, a}};
  for (int t = 0; t < 200; ++t) {
    const Vec2 agent(u(rng), u(rng)), pa(u(rng), u(rng));
    auto g = solve_path(agent, pa, std::span(orders[0], 2));
    const auto h = solve_path(agent, pa, std::span(orders[1], 2));
    ASSERT_TRUE(g.has_value() != h.has_value());
    if (!g) g = h;
    const Vec2 image = mirror_point(mirror_point(pa, a.line), b.line);
    EXPECT_NEAR(g->length, (agent - image).norm(), 1e-12);
    double sum = 0.0;
    for (std::size_t k = 0; k < g->segment_count(); ++k) sum += g->segment(k).length();
    EXPECT_NEAR(g->length, sum, 1e-12);
  }
}

TEST(Amplitude, Calibration) {
  EXPECT_NEAR(normalized_amplitude(1.0, 1.0, kRadio), std::sqrt(1000.0), 1e-10);
  EXPECT_NEAR(normalized_amplitude(1.0, 10.0, kRadio), 3.16228, 1e-5);
  EXPECT_NEAR(normalized_amplitude(0.5, 1.0, kRadio), 15.8114, 1e-4);
  EXPECT_EQ(normalized_amplitude(0.0, 3.0, kRadio), 0.0);
  EXPECT_THROW(normalized_amplitude(1.0, 0.0, kRadio), std::invalid_argument);
}

TEST(Amplitude, Homogeneous) {
  for (double d : {0.3, 1.0, 2.7, 11.0}) {
    EXPECT_NEAR(normalized_amplitude(0.37, d, kRadio), 0.37 * normalized_amplitude(1.0, d, kRadio),
                1e-12);
    EXPECT_NEAR(normalized_amplitude(1.0, 2.0 * d, kRadio),
                normalized_amplitude(1.0, d, kRadio) / 2.0, 1e-12);
  }
}

TEST(DetectionProbability, ZeroAmplitudeIsRayleighTail) {
  const double u_de = amplitude_from_db(6.0);
  EXPECT_NEAR(detection_probability(0.0, u_de), std::exp(-u_de * u_de), 1e-15);
}

TEST(DetectionProbability, StrongPathAlmostSure) {
  const double u_de = amplitude_from_db(6.0);
  EXPECT_GT(detection_probability(10.0 * u_de, u_de), 0.999);
}

TEST(DetectionProbability, MatchesRiceQuadrature) {
  const double u_de = amplitude_from_db(6.0);
  for (double u : {0.1, 0.5, 1.0, 2.0, 3.0, 5.0})
    EXPECT_NEAR(detection_probability(u, u_de), rice_exceedance(u, u_de), 1e-9) << u;
}

TEST(DetectionProbability, MonotoneAndTableAccurate) {
  const double u_de = amplitude_from_db(6.0);
  const DetectionModel table(u_de);
  double last = 0.0;
  for (double u = 0.0; u < 15.0; u += 0.0137) {
    const double p = detection_probability(u, u_de);
    EXPECT_GE(p, last);
    last = p;
    EXPECT_NEAR(table(u), p, 1e-6);
  }
}

TEST(Variances, InverseSquareLaw) {
  const MeasurementVariances a = measurement_variances(7.0, kRadio);
  const MeasurementVariances b = measurement_variances(14.0, kRadio);
  EXPECT_EQ(std::sqrt(b.d), std::sqrt(a.d) / 2.0);
  EXPECT_DOUBLE_EQ(a.aoa * 49.0, b.aoa * 196.0);
  EXPECT_DOUBLE_EQ(a.u, 0.5);
  EXPECT_THROW(measurement_variances(0.0, kRadio), std::invalid_argument);
}

TEST(Variances, DistancePlugIn) {
  const double u = std::sqrt(1000.0);
  const double beff = 1e9 / std::sqrt(12.0);
  const double expect = kSpeedOfLight / (std::sqrt(8.0) * kPi * beff * u);
  EXPECT_NEAR(std::sqrt(measurement_variances(u, kRadio).d), expect, 1e-15);
}

TEST(Variances, DistanceMatchesNumericFisherInformation) {
  // Flat spectrum of width B: FIM for delay with complex SNR u^2 is
  // 8 pi^2 u^2 int f^2 df / B; sigma_d = c / sqrt(FIM).
  const double B = 1e9, u = 12.0;
  const int n = 200000;
  double m2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double f = -B / 2 + (k + 0.5) * B / n;
    m2 += f * f / n;
  }
  const double fim = 8.0 * kPi * kPi * u * u * m2;
  EXPECT_NEAR(std::sqrt(measurement_variances(u, kRadio).d), kSpeedOfLight / std::sqrt(fim),
              1e-6 * kSpeedOfLight / std::sqrt(fim));
}

TEST(Lhf, PeakValue) {
  const auto path = *solve_path({3.0, 4.0}, {0.0, 0.0}, {});
  const double u = 6.0, u_de = 2.0;
  const MeasurementVariances v = measurement_variances(u, kRadio);
  const Measurement z{path.length, path.aod, path.aoa, 6.3};
  const double expect = 1.0 / std::sqrt(2 * kPi * v.d) / std::sqrt(2 * kPi * v.aod) /
                        std::sqrt(2 * kPi * v.aoa) * truncated_amplitude_density(6.3, u, u_de);
  EXPECT_NEAR(evaluate_lhf(z, path, u, v, u_de) / expect, 1.0, 1e-10);
}

TEST(Lhf, FiveSigmaDistanceRatio) {
  const auto path = *solve_path({3.0, 4.0}, {0.0, 0.0}, {});
  const double u = 6.0, u_de = 2.0;
  const MeasurementVariances v = measurement_variances(u, kRadio);
  Measurement z{path.length, path.aod, path.aoa, 6.0};
  const double peak = evaluate_lhf(z, path, u, v, u_de);
  z.z_d += 5.0 * std::sqrt(v.d);
  EXPECT_NEAR(evaluate_lhf(z, path, u, v, u_de) / peak, std::exp(-12.5), 1e-15);
  z.z_u = 1.9;
  EXPECT_EQ(evaluate_lhf(z, path, u, v, u_de), 0.0);
}

TEST(Lhf, TruncatedAmplitudeIntegratesToOne) {
  const double u_de = amplitude_from_db(6.0);
  for (double u : {0.5, 2.0, 5.0, 31.6}) {
    auto f = [&](double z) { return truncated_amplitude_density(z, u, u_de); };
    const double mass = boost::math::quadrature::exp_sinh<double>().integrate(
        [&](double t) { return f(u_de + t); }, 0.0, std::numeric_limits<double>::infinity());
    EXPECT_NEAR(mass, 1.0, 1e-6) << u;
  }
}

TEST(WrappedNormal, IntegratesToOneForWideVariance) {
  auto f = [](double x) { return wrapped_normal_density(x, 4.0); };
  const double mass =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -kPi, kPi, 10, 1e-12);
  EXPECT_NEAR(mass, 1.0, 1e-6);
  EXPECT_NEAR(wrapped_normal_density(kPi - 0.1, 0.01), wrapped_normal_density(-kPi - 0.1, 0.01),
              1e-12);
}

TEST(Clutter, IntegratesToOne) {
  ClutterModel c;
  c.u_de = 2.0;
  c.max_distance = 30.0;
  // Separable: uniform parts are exact, so integrate the amplitude factor.
  const Measurement z0{1.0, 0.0, 0.0, 2.0};
  const double uniform = c.max_distance * kTwoPi * kTwoPi;
  const double mass = boost::math::quadrature::exp_sinh<double>().integrate(
      [&](double t) {
        Measurement z = z0;
        z.z_u = c.u_de + t;
        return c.density(z) * uniform;
      },
      0.0, std::numeric_limits<double>::infinity());
  EXPECT_NEAR(mass, 1.0, 1e-8);
  EXPECT_EQ(c.mu_fa, 1.0);
}

TEST(Clutter, ZeroOutsideSupport) {
  ClutterModel c;
  EXPECT_EQ(false_alarm_density({31.0, 0.0, 0.0, 3.0}, c), 0.0);
  EXPECT_EQ(false_alarm_density({-0.1, 0.0, 0.0, 3.0}, c), 0.0);
  EXPECT_EQ(false_alarm_density({5.0, 0.0, 0.0, 1.0}, c), 0.0);
}
