#include "rfslam/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "rfslam/errors.hpp"

namespace rfslam {

namespace {

using nlohmann::json;

constexpr double kOcclusionTol = 1e-9;

Vec2 read_point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(std::string("expected [x, y] for ") + what);
  return {j[0].get<double>(), j[1].get<double>()};
}

json write_point(const Vec2& p) { return json::array({p.x(), p.y()}); }

bool inside(const Vec2& p, const Vec2& lo, const Vec2& hi) {
  return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y();
}

bool occluded(const PathGeometry& g, const EnvironmentSpec& env,
              const std::array<int, 2>& own) {
  for (std::size_t k = 0; k < g.segment_count(); ++k) {
    const Segment seg = g.segment(k);
    for (std::size_t w = 0; w < env.surfaces.size(); ++w) {
      const int wi = static_cast<int>(w);
      // The bounce walls at either end of this segment.
      const bool start_wall = k >= 1 && own[k - 1] == wi;
      const bool end_wall = k < g.interaction_count() && own[k] == wi;
      if (start_wall || end_wall) continue;
      if (segments_cross(seg, env.surfaces[w].segment, kOcclusionTol)) return true;
    }
  }
  return false;
}

}  // namespace

void EnvironmentSpec::validate() const {
  for (const Wall& w : surfaces) {
    if (!(w.segment.length() > 0.0)) throw ConfigError("degenerate surface");
    if (!(w.rho >= 0.0 && w.rho <= 1.0)) throw ConfigError("surface rho outside [0, 1]");
  }
  if (!(roi_max.x() > roi_min.x() && roi_max.y() > roi_min.y()))
    throw ConfigError("empty region of interest");
}

EnvironmentSpec load_environment(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open environment file " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("environment file " + file.string() + ": " + e.what());
  }
  EnvironmentSpec env;
  try {
    for (const json& s : doc.at("surfaces"))
      env.surfaces.push_back({{read_point(s.at("p1"), "p1"), read_point(s.at("p2"), "p2")},
                              s.at("rho").get<double>()});
    for (const json& p : doc.at("pas"))
      env.pas.push_back({p.at("id").get<int>(), read_point(p.at("pos"), "pos")});
    const json& roi = doc.at("roi");
    env.roi_min = read_point(roi.at("min"), "roi.min");
    env.roi_max = read_point(roi.at("max"), "roi.max");
  } catch (const json::exception& e) {
    throw ConfigError("environment file " + file.string() + ": " + e.what());
  }
  if (env.pas.empty()) throw ConfigError("environment has no PA");
  env.validate();
  return env;
}

void save_environment(const EnvironmentSpec& env, const std::filesystem::path& file) {
  json doc;
  doc["surfaces"] = json::array();
  for (const Wall& w : env.surfaces)
    doc["surfaces"].push_back({{"p1", write_point(w.segment.p1)},
                               {"p2", write_point(w.segment.p2)},
                               {"rho", w.rho}});
  doc["pas"] = json::array();
  for (const PhysicalAnchor& p : env.pas)
    doc["pas"].push_back({{"id", p.id}, {"pos", write_point(p.pos)}});
  doc["roi"] = {{"min", write_point(env.roi_min)}, {"max", write_point(env.roi_max)}};
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<AgentState> generate_trajectory(const ScenarioConfig& cfg,
                                            const Vec2& roi_min,
                                            const Vec2& roi_max) {
  if (cfg.waypoints.size() < 2) throw ConfigError("need at least two waypoints");
  if (!(cfg.step_size > 0.0) || !(cfg.dT > 0.0))
    throw ConfigError("step_size and dT must be positive");
  for (const Vec2& w : cfg.waypoints)
    if (!inside(w, roi_min, roi_max)) throw ConfigError("waypoint outside ROI");

  std::vector<Vec2> pts{cfg.waypoints.front()};
  double carried = 0.0;  // arc length already travelled past the last sample
  for (std::size_t k = 1; k < cfg.waypoints.size(); ++k) {
    const Vec2 a = cfg.waypoints[k - 1], b = cfg.waypoints[k];
    const double len = (b - a).norm();
    if (len == 0.0) continue;
    double s = cfg.step_size - carried;
    while (s <= len + 1e-9) {
      pts.push_back(a + std::min(s, len) / len * (b - a));
      s += cfg.step_size;
    }
    carried = len - (s - cfg.step_size);
    if (carried < 1e-9) carried = 0.0;
  }
  if ((pts.back() - cfg.waypoints.back()).norm() > 1e-9) pts.push_back(cfg.waypoints.back());

  std::vector<AgentState> out(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    out[k].p = pts[k];
    out[k].dphi = wrap_angle(cfg.orientation + static_cast<double>(k) * cfg.orientation_drift);
    if (k > 0) out[k].v = (pts[k] - pts[k - 1]) / cfg.dT;
  }
  if (out.size() > 1) out[0].v = out[1].v;
  return out;
}

std::vector<TruePath> enumerate_true_paths(const EnvironmentSpec& env,
                                           const AgentState& agent,
                                           const Vec2& pa) {
  std::vector<TruePath> out;
  const int S = static_cast<int>(env.surfaces.size());
  auto add = [&](std::span<const Reflector> refl, std::array<int, 2> ids, double beta) {
    auto g = solve_path(agent.p, pa, refl, agent.dphi);
    if (!g || occluded(*g, env, ids)) return;
    out.push_back({std::move(*g), beta, ids});
  };
  add({}, {-1, -1}, 1.0);
  for (int s = 0; s < S; ++s) {
    const Reflector r = Reflector::wall(env.surfaces[s].segment);
    add(std::span<const Reflector>(&r, 1), {s, -1}, env.surfaces[s].rho);
  }
  for (int s = 0; s < S; ++s)
    for (int t = 0; t < S; ++t) {
      if (s == t) continue;
      const Reflector r[2] = {Reflector::wall(env.surfaces[s].segment),
                              Reflector::wall(env.surfaces[t].segment)};
      add(std::span<const Reflector>(r, 2), {s, t},
          env.surfaces[s].rho * env.surfaces[t].rho);
    }
  return out;
}

Measurement sample_false_alarm(const ClutterModel& clutter, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  Measurement z;
  z.z_d = clutter.max_distance * u01(rng);
  z.z_aod = wrap_angle(kPi - kTwoPi * u01(rng));
  z.z_aoa = wrap_angle(kPi - kTwoPi * u01(rng));
  // z^2 - u_de^2 ~ Exp(1).
  z.z_u = std::sqrt(clutter.u_de * clutter.u_de + ex(rng));
  return z;
}

std::vector<Measurement> synthesize_measurements(std::span<const TruePath> paths,
                                                 const RadioConstants& radio,
                                                 const ClutterModel& clutter, Rng& rng,
                                                 const SynthesisOptions& opts) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Measurement> out;
  const double gain = radio.amplitude_gain();
  for (const TruePath& p : paths) {
    const double u = p.beta * gain / p.geometry.length;
    // Rice amplitude: |u + n| with complex noise of unit power.
    const double re = u + std::sqrt(0.5) * n01(rng);
    const double im = std::sqrt(0.5) * n01(rng);
    const double e[3] = {n01(rng), n01(rng), n01(rng)};
    double zu = std::hypot(re, im);
    if (zu < clutter.u_de && !opts.force_detection) continue;
    if (opts.noiseless) zu = std::max(u, clutter.u_de);
    zu = std::max(zu, clutter.u_de);
    Measurement z{p.geometry.length, p.geometry.aod, p.geometry.aoa, zu};
    if (!opts.noiseless && u > 0.0) {
      const MeasurementVariances v = measurement_variances(u, radio);
      z.z_d += std::sqrt(v.d) * e[0];
      z.z_aod = wrap_angle(z.z_aod + std::sqrt(v.aod) * e[1]);
      z.z_aoa = wrap_angle(z.z_aoa + std::sqrt(v.aoa) * e[2]);
    }
    out.push_back(z);
  }
  if (opts.false_alarms && clutter.mu_fa > 0.0) {
    std::poisson_distribution<int> count(clutter.mu_fa);
    const int n = count(rng);
    for (int k = 0; k < n; ++k) out.push_back(sample_false_alarm(clutter, rng));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<Measurement> synthesize_measurements(const EnvironmentSpec& env,
                                                 const AgentState& agent,
                                                 const Vec2& pa,
                                                 const RadioConstants& radio,
                                                 const ClutterModel& clutter, Rng& rng,
                                                 const SynthesisOptions& opts) {
  const auto paths = enumerate_true_paths(env, agent, pa);
  return synthesize_measurements(paths, radio, clutter, rng, opts);
}

}  // namespace rfslam
