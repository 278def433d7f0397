#include "rfslam/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rfslam/errors.hpp"

namespace rfslam {

namespace {

using nlohmann::json;

/// Strict view of a JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() = default;

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void get_deg(const char* key, double& rad) {
    double d = rad2deg(rad);
    get(key, d);
    rad = deg2rad(d);
  }

  void get_point(const char* key, Vec2& out) {
    if (!has(key)) return;
    out = point(j_.at(key), where(key));
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  const json& raw(const char* key) const { return j_.at(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where(it.key().c_str()) + ": unknown key");
  }

  std::string where(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

  static Vec2 point(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
      throw ConfigError(what + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<HitMessageForm> kHitForms[] = {{HitMessageForm::kExact, "exact"},
                                                  {HitMessageForm::kSingleCell, "single_cell"}};
constexpr EnumName<ValidityNormalization> kValidity[] = {
    {ValidityNormalization::kNone, "none"},
    {ValidityNormalization::kPerPathMax, "per_path_max"},
    {ValidityNormalization::kRelative, "relative"}};
constexpr EnumName<BlockedPathModel> kBlocked[] = {{BlockedPathModel::kDrop, "drop"},
                                                   {BlockedPathModel::kMiss, "miss"}};

template <typename E, std::size_t N>
void get_enum(Section& s, const char* key, const EnumName<E> (&names)[N], E& out) {
  std::string v;
  if (!s.has(key)) return;
  s.get(key, v);
  for (const auto& n : names)
    if (v == n.name) {
      out = n.value;
      return;
    }
  throw ConfigError(s.where(key) + ": unknown value '" + v + "'");
}

template <typename E, std::size_t N>
const char* enum_name(const EnumName<E> (&names)[N], E v) {
  for (const auto& n : names)
    if (n.value == v) return n.name;
  return "";
}

json point_json(const Vec2& p) { return json::array({p.x(), p.y()}); }

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool unit(double v) { return v >= 0.0 && v <= 1.0; }

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

std::string apply_override(std::string_view json_text, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override must look like key=value: " + std::string(assignment));
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  json doc = json_text.empty() ? json::object() : parse_json(json_text);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("bad override key: " + key);
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw ConfigError("override path is not an object: " + key);
    if (i + 1 == parts.size())
      (*node)[parts[i]] = parsed;
    else
      node = &(*node)[parts[i]];
  }
  return doc.dump();
}

RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir,
                           std::span<const std::string> overrides) {
  std::string text(json_text);
  for (const std::string& o : overrides) text = apply_override(text, o);
  const json doc = parse_json(text);

  RunConfig c;
  Section top(doc, "");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path f(p);
    return f.is_relative() && !base_dir.empty() ? base_dir / f : f;
  };
  std::string s;
  if (top.has("environment")) {
    top.get("environment", s);
    c.environment = resolve(s);
  }
  if (top.has("output_dir")) {
    top.get("output_dir", s);
    c.output_dir = s;
  }
  if (top.has("prior_map")) {
    top.get("prior_map", s);
    c.prior_map = resolve(s);
  }
  top.get("seed", c.seed);
  top.get("threads", c.threads);

  {
    Section sc = top.child("scenario");
    ScenarioConfig& x = c.scenario;
    sc.get("snr_1m_db", x.snr_1m_db);
    sc.get("u_de_db", x.u_de_db);
    sc.get("mu_fa", x.mu_fa);
    sc.get("max_distance", x.max_distance);
    sc.get("n_steps", x.n_steps);
    sc.get("step_size", x.step_size);
    sc.get("dT", x.dT);
    sc.get_deg("orientation_deg", x.orientation);
    sc.get_deg("orientation_drift_deg", x.orientation_drift);
    if (sc.has("waypoints")) {
      const json& w = sc.raw("waypoints");
      if (!w.is_array()) throw ConfigError("scenario.waypoints: expected an array");
      for (const json& p : w) x.waypoints.push_back(Section::point(p, "scenario.waypoints"));
    }
    sc.finish();
  }
  {
    Section f = top.child("filter");
    FilterConfig& x = c.filter;
    f.get("num_particles", x.num_particles);
    f.get("p_de", x.p_de);
    f.get("p_pr", x.p_pr);
    f.get("p_gate", x.p_gate);
    f.get("mu_n", x.mu_n);
    f.get("hit_radius", x.classify.hit_radius);
    f.get("endpoint_guard", x.classify.endpoint_guard);
    f.get("surface_guard", x.classify.surface_guard);
    f.get("hit_on_surface", x.classify.hit_on_surface);
    f.get("surface_margin", x.classify.surface_margin);
    f.get("occupancy_floor", x.fusion.occupancy_floor);
    get_enum(f, "hit_form", kHitForms, x.hit_form);
    get_enum(f, "validity", kValidity, x.validity);
    f.get("validity_reference", x.validity_reference);
    get_enum(f, "blocked", kBlocked, x.blocked);
    f.get("include_los", x.include_los);
    f.get("include_double_bounce", x.include_double_bounce);
    f.get("update_grid", x.update_grid);
    f.get("grid_particles", x.grid_particles);
    f.get("los_existence_init", x.los_existence_init);
    f.get("birth_geometric_fraction", x.birth_geometric_fraction);
    f.get("birth_validity", x.birth_validity);
    f.get("rho_min", x.rho_min);
    f.get("rho_max", x.rho_max);
    f.get("resample_threshold", x.resample_threshold);
    f.get("bp_max_iterations", x.association.max_iterations);
    f.get("bp_tolerance", x.association.tolerance);
    f.get("bp_damping", x.association.damping);
    f.get("carrier_hz", x.radio.carrier_hz);
    f.get("bandwidth_hz", x.radio.bandwidth_hz);
    f.finish();
  }
  {
    Section n = top.child("noise");
    MotionNoise& x = c.filter.noise;
    n.get("sigma_nu", x.sigma_nu);
    n.get_deg("sigma_phi_deg", x.sigma_phi);
    n.get("sigma_p", x.sigma_p);
    n.get("sigma_rho", x.sigma_rho);
    n.get("p_s", x.p_s);
    n.finish();
  }
  {
    Section p = top.child("prior");
    p.get("position_halfwidth", c.prior.position_halfwidth);
    p.get("velocity_halfwidth", c.prior.velocity_halfwidth);
    p.get_deg("orientation_halfwidth_deg", c.prior.orientation_halfwidth);
    p.finish();
  }
  {
    Section g = top.child("grid");
    g.get("cell_size", c.grid_cell_size);
    const bool explicit_layout = g.has("origin") || g.has("nx") || g.has("ny");
    if (explicit_layout) {
      GridSpec spec;
      spec.cell_size = c.grid_cell_size;
      check(g.has("origin") && g.has("nx") && g.has("ny"),
            "grid: origin, nx and ny must be given together");
      g.get_point("origin", spec.origin);
      g.get("nx", spec.nx);
      g.get("ny", spec.ny);
      c.grid = spec;
    }
    g.finish();
  }
  top.finish();
  c.scenario.mu_n = c.filter.mu_n;
  c.scenario.seed = c.seed;
  c.filter.noise.dT = c.scenario.dT;
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file,
                          std::span<const std::string> overrides) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), file.parent_path(), overrides);
}

void validate(const RunConfig& c) {
  const FilterConfig& f = c.filter;
  const ScenarioConfig& s = c.scenario;
  check(f.num_particles >= 1, "filter.num_particles must be >= 1");
  check(unit(f.p_de) && unit(f.p_pr) && unit(f.p_gate), "filter thresholds must lie in [0, 1]");
  check(f.validity_reference > 0.0 && f.validity_reference < 1.0,
        "filter.validity_reference must lie in (0, 1)");
  check(f.mu_n >= 0.0, "filter.mu_n must be >= 0");
  check(f.classify.hit_radius >= 0.0 && f.classify.endpoint_guard >= 0.0,
        "filter.hit_radius and filter.endpoint_guard must be >= 0");
  check(f.fusion.occupancy_floor < 1.0, "filter.occupancy_floor must be < 1");
  check(unit(f.los_existence_init), "filter.los_existence_init must lie in [0, 1]");
  check(unit(f.birth_geometric_fraction), "filter.birth_geometric_fraction must lie in [0, 1]");
  check(f.rho_min >= 0.0 && f.rho_max <= 1.0 && f.rho_min <= f.rho_max,
        "filter.rho_min/rho_max must satisfy 0 <= min <= max <= 1");
  check(unit(f.resample_threshold), "filter.resample_threshold must lie in [0, 1]");
  check(f.association.max_iterations >= 1 && f.association.tolerance > 0.0 &&
            f.association.damping >= 0.0 && f.association.damping < 1.0,
        "filter.bp_* out of range");
  check(f.radio.carrier_hz > 0.0 && f.radio.bandwidth_hz > 0.0,
        "filter.carrier_hz and filter.bandwidth_hz must be > 0");
  const MotionNoise& n = f.noise;
  check(n.sigma_nu >= 0.0 && n.sigma_phi >= 0.0 && n.sigma_p >= 0.0 && n.sigma_rho >= 0.0,
        "noise standard deviations must be >= 0");
  check(unit(n.p_s), "noise.p_s must lie in [0, 1]");
  check(s.n_steps >= 1, "scenario.n_steps must be >= 1");
  check(s.step_size > 0.0 && s.dT > 0.0, "scenario.step_size and scenario.dT must be > 0");
  check(s.mu_fa >= 0.0, "scenario.mu_fa must be >= 0");
  check(s.max_distance > 0.0, "scenario.max_distance must be > 0");
  check(c.prior.position_halfwidth >= 0.0 && c.prior.velocity_halfwidth >= 0.0 &&
            c.prior.orientation_halfwidth >= 0.0,
        "prior half-widths must be >= 0");
  check(c.grid_cell_size > 0.0, "grid.cell_size must be > 0");
  if (c.grid) check(c.grid->valid(), "grid: invalid layout");
  check(c.threads >= 0, "threads must be >= 0");
}

std::string run_config_to_json(const RunConfig& c) {
  json doc;
  doc["environment"] = c.environment.string();
  doc["output_dir"] = c.output_dir.string();
  doc["prior_map"] = c.prior_map ? json(c.prior_map->string()) : json(nullptr);
  doc["seed"] = c.seed;
  doc["threads"] = c.threads;
  const ScenarioConfig& s = c.scenario;
  json wp = json::array();
  for (const Vec2& p : s.waypoints) wp.push_back(point_json(p));
  doc["scenario"] = {{"snr_1m_db", s.snr_1m_db},
                     {"u_de_db", s.u_de_db},
                     {"mu_fa", s.mu_fa},
                     {"max_distance", s.max_distance},
                     {"n_steps", s.n_steps},
                     {"step_size", s.step_size},
                     {"dT", s.dT},
                     {"orientation_deg", rad2deg(s.orientation)},
                     {"orientation_drift_deg", rad2deg(s.orientation_drift)},
                     {"waypoints", wp}};
  const FilterConfig& f = c.filter;
  doc["filter"] = {{"num_particles", f.num_particles},
                   {"p_de", f.p_de},
                   {"p_pr", f.p_pr},
                   {"p_gate", f.p_gate},
                   {"mu_n", f.mu_n},
                   {"hit_radius", f.classify.hit_radius},
                   {"endpoint_guard", f.classify.endpoint_guard},
                   {"surface_guard", f.classify.surface_guard},
                   {"hit_on_surface", f.classify.hit_on_surface},
                   {"surface_margin", f.classify.surface_margin},
                   {"occupancy_floor", f.fusion.occupancy_floor},
                   {"hit_form", enum_name(kHitForms, f.hit_form)},
                   {"validity", enum_name(kValidity, f.validity)},
                   {"validity_reference", f.validity_reference},
                   {"blocked", enum_name(kBlocked, f.blocked)},
                   {"include_los", f.include_los},
                   {"include_double_bounce", f.include_double_bounce},
                   {"update_grid", f.update_grid},
                   {"grid_particles", f.grid_particles},
                   {"los_existence_init", f.los_existence_init},
                   {"birth_geometric_fraction", f.birth_geometric_fraction},
                   {"birth_validity", f.birth_validity},
                   {"rho_min", f.rho_min},
                   {"rho_max", f.rho_max},
                   {"resample_threshold", f.resample_threshold},
                   {"bp_max_iterations", f.association.max_iterations},
                   {"bp_tolerance", f.association.tolerance},
                   {"bp_damping", f.association.damping},
                   {"carrier_hz", f.radio.carrier_hz},
                   {"bandwidth_hz", f.radio.bandwidth_hz}};
  doc["noise"] = {{"sigma_nu", f.noise.sigma_nu},
                  {"sigma_phi_deg", rad2deg(f.noise.sigma_phi)},
                  {"sigma_p", f.noise.sigma_p},
                  {"sigma_rho", f.noise.sigma_rho},
                  {"p_s", f.noise.p_s}};
  doc["prior"] = {{"position_halfwidth", c.prior.position_halfwidth},
                  {"velocity_halfwidth", c.prior.velocity_halfwidth},
                  {"orientation_halfwidth_deg", rad2deg(c.prior.orientation_halfwidth)}};
  doc["grid"] = {{"cell_size", c.grid_cell_size}};
  if (c.grid) {
    doc["grid"]["origin"] = point_json(c.grid->origin);
    doc["grid"]["nx"] = c.grid->nx;
    doc["grid"]["ny"] = c.grid->ny;
  }
  return doc.dump(2);
}

FilterConfig resolve_filter_config(const RunConfig& cfg, const EnvironmentSpec& env) {
  FilterConfig f = cfg.filter;
  const ScenarioConfig& s = cfg.scenario;
  const RadioConstants base = RadioConstants::calibrated(s.snr_1m_db, f.radio.carrier_hz,
                                                         f.radio.bandwidth_hz);
  f.radio = base;
  f.clutter.mu_fa = s.mu_fa;
  f.clutter.max_distance = s.max_distance;
  f.clutter.u_de = amplitude_from_db(s.u_de_db);
  f.mu_n = cfg.filter.mu_n;
  f.noise.dT = s.dT;
  f.roi_min = env.roi_min;
  f.roi_max = env.roi_max;
  f.grid = cfg.grid ? *cfg.grid : GridSpec::covering(env.roi_min, env.roi_max, cfg.grid_cell_size);
  return f;
}

}  // namespace rfslam
