#include "rfslam/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rfslam/errors.hpp"

namespace rfslam {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kMaxExistence = 1.0 - 1e-12;
// Column rescaling keeps exp(log likelihood ratio) below exp(kLogCeiling).
constexpr double kLogCeiling = 200.0;

class Stopwatch {
 public:
  explicit Stopwatch(double& sink)
      : sink_(sink), t0_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
                 .count();
  }

 private:
  double& sink_;
  std::chrono::steady_clock::time_point t0_;
};

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Wrapped normal without its normalizer.
double log_wn_kernel(double delta, double var, double inv_var) {
  delta = wrap_angle(delta);
  if (var < 0.09 && std::abs(delta) < 0.5 * kPi) return -0.5 * delta * delta * inv_var;
  return log_wrapped_normal_density(delta, var) + 0.5 * std::log(var) + kLogSqrt2Pi;
}

double log_normal(double delta, double var) {
  return -0.5 * delta * delta / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

struct Column {
  Measurement z;
  bool usable = false;
  double var_d = 0.0, var_aod = 0.0, var_aoa = 0.0;
  double inv_var_d = 0.0, inv_var_aod = 0.0, inv_var_aoa = 0.0;
  double log_norm = 0.0;
  double log_clutter = 0.0;
};

}  // namespace

struct Filter::MeasurementCache {
  std::vector<Column> cols;

  MeasurementCache(std::span<const Measurement> z, const FilterConfig& cfg) {
    cols.resize(z.size());
    const double log_mu = std::log(std::max(cfg.clutter.mu_fa, 1e-12));
    for (std::size_t m = 0; m < z.size(); ++m) {
      Column& c = cols[m];
      c.z = z[m];
      const double lc = cfg.clutter.log_density(z[m]);
      c.usable = std::isfinite(lc) && z[m].z_u > 0.0;
      if (!c.usable) continue;
      const MeasurementVariances v = measurement_variances(z[m].z_u, cfg.radio);
      c.var_d = v.d;
      c.var_aod = v.aod;
      c.var_aoa = v.aoa;
      c.inv_var_d = 1.0 / v.d;
      c.inv_var_aod = 1.0 / v.aod;
      c.inv_var_aoa = 1.0 / v.aoa;
      c.log_norm = -0.5 * (std::log(v.d) + std::log(v.aod) + std::log(v.aoa)) -
                   3.0 * kLogSqrt2Pi;
      c.log_clutter = log_mu + lc;
    }
  }

  std::size_t size() const { return cols.size(); }

  /// log(f(z | path, u) p_d(u) / (mu_fa f_fa(z))): the truncated amplitude
  /// density times p_d is the plain Rice density.
  double log_ratio(std::size_t m, const PathGeometry& g, double u) const {
    const Column& c = cols[m];
    if (!c.usable) return kNegInf;
    const double dd = c.z.z_d - g.length;
    return c.log_norm - 0.5 * dd * dd * c.inv_var_d +
           log_wn_kernel(c.z.z_aod - g.aod, c.var_aod, c.inv_var_aod) +
           log_wn_kernel(c.z.z_aoa - g.aoa, c.var_aoa, c.inv_var_aoa) +
           log_rice_density(c.z.z_u, u) - c.log_clutter;
  }
};

Filter::Filter(FilterConfig cfg, std::vector<PhysicalAnchor> pas, ThreadPool* pool)
    : cfg_(std::move(cfg)),
      pas_(std::move(pas)),
      pool_(pool),
      detection_(cfg_.clutter.u_de) {
  if (cfg_.num_particles == 0) throw ConfigError("num_particles must be >= 1");
  if (!cfg_.grid.valid()) throw ConfigError("invalid grid");
  frame_.reference = cfg_.reference();
  const std::size_t nw = pool_ ? pool_->size() : 1;
  for (std::size_t w = 0; w < nw; ++w)
    workers_.push_back({CellClassifier(cfg_.grid, cfg_.classify), {}, {}});
}

void Filter::parallel_for(
    std::size_t n,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (pool_)
    pool_->parallel_for(n, fn);
  else if (n > 0)
    fn(0, n, 0);
}

void Filter::initialize(const AgentState& prior_center, const AgentPrior& prior,
                        OccupancyGrid grid_prior, Rng& rng) {
  if (grid_prior.spec.nx != cfg_.grid.nx || grid_prior.spec.ny != cfg_.grid.ny)
    throw ConfigError("grid prior does not match the grid layout");
  state_ = FilterState{};
  state_.agent = init_agent_particles(prior_center, cfg_.num_particles, prior, rng);
  state_.grid = std::move(grid_prior);
  state_.los_existence.assign(pas_.size(), cfg_.los_existence_init);
}

void Filter::predict(Rng& rng) {
  ++state_.n;
  propagate_agents(state_.agent, cfg_.noise, rng);
  for (PsfvBelief& y : state_.psfvs) {
    y = transition_psfv_time(y, cfg_.noise, rng, cfg_.rho_min, cfg_.rho_max);
    // Fresh random pairing with the agent particles.
    for (std::size_t i = y.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      const std::size_t k = pick(rng);
      std::swap(y.pos[i - 1], y.pos[k]);
      std::swap(y.rho[i - 1], y.rho[k]);
      std::swap(y.w[i - 1], y.w[k]);
    }
  }
  const double ps = cfg_.noise.p_s;
  for (double& r : state_.los_existence) r = ps * r + (1.0 - ps) * (1.0 - r);
  state_.grid = predict_grid(state_.grid);
}

std::vector<PathRef> Filter::enumerate_paths() const {
  std::vector<PathRef> out;
  if (cfg_.include_los) out.push_back({PathKind::kLos, -1, -1});
  const int S = static_cast<int>(state_.psfvs.size());
  for (int s = 0; s < S; ++s)
    if (state_.psfvs[s].r_prob > 0.0) out.push_back({PathKind::kSingleBounce, s, -1});
  if (cfg_.include_double_bounce) {
    for (int s = 0; s < S; ++s) {
      if (!(state_.psfvs[s].r_prob > cfg_.p_gate)) continue;
      for (int t = 0; t < S; ++t) {
        if (t == s || !(state_.psfvs[t].r_prob > cfg_.p_gate)) continue;
        out.push_back({PathKind::kDoubleBounce, s, t});
      }
    }
  }
  return out;
}

bool Filter::particle_path(std::size_t j, const PathRef& ref, std::size_t i,
                           PathGeometry& out, double& beta) const {
  const AgentState& x = state_.agent.x[i];
  Reflector refl[2];
  std::size_t nb = 0;
  beta = 1.0;
  for (int s : {ref.s, ref.s2}) {
    if (s < 0) continue;
    const PsfvBelief& y = state_.psfvs[static_cast<std::size_t>(s)];
    const auto line = frame_.line_of(y.pos[i]);
    if (!line) return false;
    refl[nb++] = Reflector::unbounded(*line);
    beta *= y.rho[i];
  }
  return solve_path_into(x.p, pas_[j].pos, std::span<const Reflector>(refl, nb),
                         x.dphi, out);
}

Filter::RawPath Filter::evaluate_raw(std::size_t j, const PathRef& ref,
                                     const MeasurementCache& mc) {
  const std::size_t N = state_.agent.size();
  const std::size_t M = mc.size();
  RawPath raw;
  raw.ref = ref;
  raw.log_like.assign(N * M, kNegInf);
  raw.log_alpha.assign(N, kNegInf);
  raw.miss.assign(N, 1.0);
  raw.partner.assign(N, 1.0);
  raw.r = ref.kind == PathKind::kLos ? state_.los_existence[j] : 1.0;
  for (int s : {ref.s, ref.s2}) {
    if (s < 0) continue;
    const PsfvBelief& y = state_.psfvs[static_cast<std::size_t>(s)];
    if (y.size() != N) throw std::logic_error("PSFV particle count mismatch");
    raw.r *= y.r_prob;
    for (std::size_t i = 0; i < N; ++i)
      raw.partner[i] *= static_cast<double>(N) * y.w[i];
  }
  raw.r = std::min(raw.r, kMaxExistence);

  const double gain = cfg_.radio.amplitude_gain();
  Stopwatch sw(timings_.ray_casting);
  parallel_for(N, [&](std::size_t b, std::size_t e, std::size_t w) {
    Worker& wk = workers_[w];
    for (std::size_t i = b; i < e; ++i) {
      double beta = 1.0;
      if (!particle_path(j, ref, i, wk.geometry, beta)) continue;
      wk.classifier.classify(wk.geometry, wk.sets);
      raw.log_alpha[i] =
          cfg_.validity == ValidityNormalization::kRelative
              ? log_relative_validity(*validity_, wk.sets, cfg_.validity_reference)
              : log_path_validity_message(*validity_, wk.sets);
      const double u = beta * gain / wk.geometry.length;
      raw.miss[i] = 1.0 - detection_(u);
      for (std::size_t m = 0; m < M; ++m)
        raw.log_like[i * M + m] = mc.log_ratio(m, wk.geometry, u);
    }
  });
  return raw;
}

PathEvidence Filter::finalize(const RawPath& raw, std::span<const double> scale,
                              std::size_t M) const {
  const std::size_t N = state_.agent.size();
  const std::size_t W = M + 1;
  PathEvidence ev;
  ev.ref = raw.ref;
  ev.r = raw.r;
  ev.columns = W;
  ev.partner = raw.partner;
  ev.alpha.assign(N, 0.0);
  ev.g.assign(N * W, 0.0);
  ev.R.assign(W, 0.0);
  ev.R_bar = 1.0 - raw.r;

  double amax = 0.0;
  if (cfg_.validity == ValidityNormalization::kPerPathMax) {
    amax = kNegInf;
    for (double a : raw.log_alpha) amax = std::max(amax, a);
  }
  ev.log_alpha_max = amax;
  const bool miss_blocked = cfg_.blocked == BlockedPathModel::kMiss;
  double blocked = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double a = std::isfinite(amax) ? std::exp(raw.log_alpha[i] - amax) : 0.0;
    ev.alpha[i] = a;
    const double wp = state_.agent.w[i] * raw.partner[i];
    double* g = &ev.g[i * W];
    g[0] = a * raw.miss[i];
    ev.R[0] += wp * g[0];
    if (miss_blocked) blocked += wp * (1.0 - a);
    if (!(a > 0.0)) continue;
    for (std::size_t m = 0; m < M; ++m) {
      const double ll = raw.log_like[i * M + m];
      if (ll == kNegInf) continue;
      g[m + 1] = a * std::exp(ll - scale[m]);
      ev.R[m + 1] += wp * g[m + 1];
    }
  }
  for (double& r : ev.R) r *= raw.r;
  ev.blocked = raw.r * blocked;
  ev.R[0] += ev.blocked;
  return ev;
}

PathEvidence Filter::evaluate_one(std::size_t j, const PathRef& ref,
                                  std::span<const Measurement> z) {
  if (j >= pas_.size()) throw std::out_of_range("PA index");
  MeasurementCache mc(z, cfg_);
  validity_ = std::make_unique<ValidityTable>(state_.grid);
  const RawPath raw = evaluate_raw(j, ref, mc);
  const std::vector<double> scale(z.size(), 0.0);
  return finalize(raw, scale, z.size());
}

PathEvidence Filter::evaluate_los(std::size_t j, std::span<const Measurement> z) {
  return evaluate_one(j, {PathKind::kLos, -1, -1}, z);
}

PathEvidence Filter::evaluate_single_bounce(std::size_t j, std::size_t s,
                                            std::span<const Measurement> z) {
  if (s >= state_.psfvs.size()) throw std::out_of_range("PSFV index");
  return evaluate_one(j, {PathKind::kSingleBounce, static_cast<int>(s), -1}, z);
}

PathEvidence Filter::evaluate_double_bounce(std::size_t j, std::size_t s,
                                            std::size_t s2,
                                            std::span<const Measurement> z) {
  if (s >= state_.psfvs.size() || s2 >= state_.psfvs.size() || s == s2)
    throw std::out_of_range("PSFV pair");
  return evaluate_one(
      j, {PathKind::kDoubleBounce, static_cast<int>(s), static_cast<int>(s2)}, z);
}

std::vector<BirthCandidate> Filter::propose_births(std::size_t j,
                                                   const MeasurementCache& mc,
                                                   Rng& rng,
                                                   std::vector<double>& log_new) {
  const std::size_t N = state_.agent.size();
  const std::size_t M = mc.size();
  const Vec2& pa = pas_[j].pos;
  const Vec2 lo = cfg_.roi_min, hi = cfg_.roi_max;
  const double area = (hi - lo).prod();
  const double log_area = std::log(area);
  const double frac = std::clamp(cfg_.birth_geometric_fraction, 0.0, 1.0);
  const double gain = cfg_.radio.amplitude_gain();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  std::vector<BirthCandidate> out(M);
  log_new.assign(M, kNegInf);
  std::vector<double> logw(N);
  struct Draw {
    double pick, e1, e2, ux, uy;
  };
  std::vector<Draw> draws(N);
  const bool use_validity = cfg_.birth_validity && cfg_.validity == ValidityNormalization::kRelative;
  for (std::size_t m = 0; m < M; ++m) {
    const Column& c = mc.cols[m];
    PsfvBelief& y = out[m].belief;
    y.pos.resize(N);
    y.rho.resize(N);
    y.w.assign(N, 1.0 / static_cast<double>(N));
    // Draws are taken unconditionally so the stream does not depend on data.
    for (std::size_t i = 0; i < N; ++i) {
      Draw& d = draws[i];
      d.pick = u01(rng);
      d.e1 = n01(rng);
      d.e2 = n01(rng);
      d.ux = u01(rng);
      d.uy = u01(rng);
      y.rho[i] = cfg_.rho_min + (cfg_.rho_max - cfg_.rho_min) * u01(rng);
    }
    const double sd = std::sqrt(c.var_d), sa = std::sqrt(c.var_aoa);
    parallel_for(N, [&](std::size_t begin, std::size_t end, std::size_t w) {
      Worker& wk = workers_[w];
      PathGeometry& geo = wk.geometry;
      for (std::size_t i = begin; i < end; ++i) {
        const AgentState& x = state_.agent.x[i];
        const Draw& dr = draws[i];
        logw[i] = kNegInf;
        if (!c.usable || cfg_.mu_n <= 0.0) {
          y.pos[i] = lo + Vec2(dr.ux, dr.uy).cwiseProduct(hi - lo);
          continue;
        }
        Vec2 vertex;
        if (dr.pick < frac) {
          const double d = c.z.z_d + sd * dr.e1;
          const double th = c.z.z_aoa + x.dphi + sa * dr.e2;
          const Vec2 va = x.p + d * Vec2(std::cos(th), std::sin(th));
          const Vec2 dv = va - pa;
          const double rho = dv.norm();
          if (!(rho > 1e-9)) {
            y.pos[i] = frame_.reference;
            continue;
          }
          Line bis;
          bis.normal = dv / rho;
          bis.offset = bis.normal.dot(0.5 * (pa + va));
          vertex = frame_.vertex_of(bis);
        } else {
          vertex = lo + Vec2(dr.ux, dr.uy).cwiseProduct(hi - lo);
        }
        y.pos[i] = vertex;
        if (vertex.x() < lo.x() || vertex.x() > hi.x() || vertex.y() < lo.y() ||
            vertex.y() > hi.y())
          continue;
        const auto line = frame_.line_of(vertex);
        if (!line) continue;
        const Reflector refl = Reflector::unbounded(*line);
        if (!solve_path_into(x.p, pa, std::span<const Reflector>(&refl, 1), x.dphi, geo))
          continue;
        const double u = y.rho[i] * gain / geo.length;
        double ll = mc.log_ratio(m, geo, u);
        if (use_validity && ll > kNegInf) {
          wk.classifier.classify(geo, wk.sets);
          ll += log_relative_validity(*validity_, wk.sets, cfg_.validity_reference);
        }

        // Mixture proposal density at the vertex.
        const Vec2 va = mirror_point(pa, *line);
        const double rho = (va - pa).norm();
        const double h = std::abs(line->signed_distance(frame_.reference));
        const double d = (va - x.p).norm();
        double log_q_geo = kNegInf;
        if (d > 0.0 && h > 0.0 && rho > 0.0) {
          const double phi = bearing(x.p, va);
          log_q_geo = log_normal(d - c.z.z_d, c.var_d) +
                      log_normal(wrap_angle(phi - x.dphi - c.z.z_aoa), c.var_aoa) -
                      std::log(d) + std::log(2.0 * rho / h);
        }
        const double a = frac > 0.0 ? std::log(frac) + log_q_geo : kNegInf;
        const double b = frac < 1.0 ? std::log(1.0 - frac) - log_area : kNegInf;
        const double mx = std::max(a, b);
        const double log_q = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        logw[i] = std::log(state_.agent.w[i]) - log_area + ll - log_q;
      }
    });
    const double total = log_sum_exp(logw);
    if (std::isfinite(total)) {
      log_new[m] = std::log(cfg_.mu_n) + total;
      for (std::size_t i = 0; i < N; ++i) y.w[i] = std::exp(logw[i] - total);
    }
    // Independent pairing with the agent particles.
    for (std::size_t i = N; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pk(0, i - 1);
      const std::size_t k = pk(rng);
      std::swap(y.pos[i - 1], y.pos[k]);
      std::swap(y.rho[i - 1], y.rho[k]);
      std::swap(y.w[i - 1], y.w[k]);
    }
  }
  return out;
}

std::vector<BirthCandidate> Filter::birth_new_psfvs(std::size_t j,
                                                    std::span<const Measurement> z,
                                                    Rng& rng) {
  if (j >= pas_.size()) throw std::out_of_range("PA index");
  MeasurementCache mc(z, cfg_);
  validity_ = std::make_unique<ValidityTable>(state_.grid);
  std::vector<double> log_new;
  auto out = propose_births(j, mc, rng, log_new);
  for (std::size_t m = 0; m < out.size(); ++m)
    out[m].new_evidence = std::exp(log_new[m]);
  return out;
}

PaUpdateResult Filter::update_pa(std::size_t j, std::span<const Measurement> z,
                                 Rng& rng) {
  if (j >= pas_.size()) throw std::out_of_range("PA index");
  const std::size_t N = state_.agent.size();
  const std::size_t M = z.size();
  const std::size_t W = M + 1;
  PaUpdateResult result;
  result.psfvs_before = state_.psfvs.size();

  MeasurementCache mc(z, cfg_);
  validity_ = std::make_unique<ValidityTable>(state_.grid);
  result.paths = enumerate_paths();
  const std::size_t K = result.paths.size();

  std::vector<RawPath> raws;
  raws.reserve(K);
  for (const PathRef& ref : result.paths) raws.push_back(evaluate_raw(j, ref, mc));

  std::vector<double> log_new;
  std::vector<BirthCandidate> births;
  {
    Stopwatch sw(timings_.birth);
    births = propose_births(j, mc, rng, log_new);
  }

  // Per-column rescaling; exact because it multiplies a whole column
  // including the false-alarm and new-path weights.
  std::vector<double> scale(M, 0.0);
  std::vector<PathEvidence> ev;
  {
    Stopwatch sw(timings_.evidence);
    for (std::size_t m = 0; m < M; ++m) {
      double mx = log_new[m];
      for (const RawPath& raw : raws)
        for (std::size_t i = 0; i < N; ++i) mx = std::max(mx, raw.log_like[i * M + m]);
      if (std::isfinite(mx)) scale[m] = std::max(0.0, mx - kLogCeiling);
    }
    ev.reserve(K);
    for (const RawPath& raw : raws) ev.push_back(finalize(raw, scale, M));
    raws.clear();
  }

  AssociationProblem prob(K, M);
  for (std::size_t k = 0; k < K; ++k) {
    // Row scaling leaves the marginals unchanged; unit row maxima keep the
    // messages in range.
    double mx = 0.0;
    for (std::size_t a = 0; a < W; ++a) mx = std::max(mx, ev[k].omega(a));
    for (std::size_t a = 0; a < W; ++a) prob.at(k, a) = ev[k].omega(a) / mx;
    prob.at(k, 0) = std::max(prob.at(k, 0), 1e-300);
  }
  for (std::size_t m = 0; m < M; ++m) {
    prob.clutter[m] = std::max(std::exp(-scale[m]), 1e-300);
    prob.new_evidence[m] = std::exp(log_new[m] - scale[m]);
  }
  {
    Stopwatch sw(timings_.association);
    result.association = solve_association(prob, cfg_.association);
  }
  const AssociationMarginals& am = result.association;
  const bool miss_blocked = cfg_.blocked == BlockedPathModel::kMiss;

  // Messages to the agent and the legacy PSFVs.
  std::vector<double> agent_log(N, 0.0);
  const std::size_t S = state_.psfvs.size();
  std::vector<std::vector<double>> psfv_log1(S);
  std::vector<double> psfv_log0(S, 0.0);
  std::vector<double> mix(N);
  {
    Stopwatch sw(timings_.evidence);
    for (std::size_t k = 0; k < K; ++k) {
      const PathEvidence& e = ev[k];
      const double eta0 = am.ext(k, 0);
      for (std::size_t i = 0; i < N; ++i) {
        const double* g = &e.g[i * W];
        double s = 0.0;
        for (std::size_t a = 0; a < W; ++a) s += am.ext(k, a) * g[a];
        if (miss_blocked) s += eta0 * (1.0 - e.alpha[i]);
        mix[i] = s;
        agent_log[i] += std::log(e.r * e.partner[i] * s + eta0 * (1.0 - e.r));
      }
      const int ss[2] = {e.ref.s, e.ref.s2};
      for (int which = 0; which < 2; ++which) {
        const int s = ss[which];
        if (s < 0) continue;
        const int other = ss[1 - which];
        auto& l1 = psfv_log1[static_cast<std::size_t>(s)];
        if (l1.empty()) l1.assign(N, 0.0);
        psfv_log0[static_cast<std::size_t>(s)] += std::log(eta0);
        for (std::size_t i = 0; i < N; ++i) {
          double msg = static_cast<double>(N) * state_.agent.w[i] * mix[i];
          if (other >= 0) {
            const PsfvBelief& yo = state_.psfvs[static_cast<std::size_t>(other)];
            const double ro = std::min(yo.r_prob, kMaxExistence);
            msg = ro * static_cast<double>(N) * yo.w[i] * msg + (1.0 - ro) * eta0;
          }
          l1[i] += std::log(msg);
        }
      }
    }
  }

  // Grid messages from the legacy paths.
  if (cfg_.update_grid && K > 0) {
    Stopwatch sw(timings_.fusion);
    const std::size_t stride =
        cfg_.grid_particles == 0 || cfg_.grid_particles >= N
            ? 1
            : (N + cfg_.grid_particles - 1) / cfg_.grid_particles;
    std::vector<std::size_t> sub;
    for (std::size_t i = 0; i < N; i += stride) sub.push_back(i);
    const double expand = static_cast<double>(N) / static_cast<double>(sub.size());
    std::vector<CellSets> sets(sub.size());
    std::vector<std::uint8_t> ok(sub.size());
    std::vector<std::vector<CellMessage>> per_path;
    per_path.reserve(K);
    PathCellAccumulator acc(state_.grid, cfg_.hit_form,
                            cfg_.validity == ValidityNormalization::kRelative
                                ? cfg_.validity_reference
                                : 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const PathEvidence& e = ev[k];
      parallel_for(sub.size(), [&](std::size_t b, std::size_t en, std::size_t w) {
        Worker& wk = workers_[w];
        for (std::size_t q = b; q < en; ++q) {
          double beta = 1.0;
          ok[q] = particle_path(j, e.ref, sub[q], wk.geometry, beta) ? 1 : 0;
          if (ok[q]) wk.classifier.classify(wk.geometry, sets[q]);
        }
      });
      const double eta0 = am.ext(k, 0);
      acc.reset();
      for (std::size_t q = 0; q < sub.size(); ++q) {
        if (!ok[q]) continue;
        const std::size_t i = sub[q];
        const double* g = &e.g[i * W];
        double s = 0.0;
        for (std::size_t a = 0; a < W; ++a) s += am.ext(k, a) * g[a];
        const double wgt = e.r * state_.agent.w[i] * e.partner[i] * expand;
        acc.add_particle(wgt * s, sets[q]);
      }
      per_path.push_back(acc.finish(eta0 * (e.R_bar + e.blocked)));
    }
    state_.grid = fuse_cell_beliefs(state_.grid, per_path, cfg_.fusion);
  }

  // Agent reweighting.
  for (std::size_t i = 0; i < N; ++i)
    agent_log[i] += std::log(state_.agent.w[i]);
  normalize_log_weights(agent_log);
  for (double v : agent_log)
    if (!std::isfinite(v)) throw NumericalError("non-finite agent weight");
  state_.agent.w = std::move(agent_log);

  // Legacy PSFV updates.
  for (std::size_t s = 0; s < S; ++s) {
    if (psfv_log1[s].empty()) continue;
    PsfvBelief& y = state_.psfvs[s];
    std::vector<double> lw(N);
    for (std::size_t i = 0; i < N; ++i) lw[i] = std::log(y.w[i]) + psfv_log1[s][i];
    const double log_m1 = log_sum_exp(lw);
    const double r = std::min(y.r_prob, kMaxExistence);
    const double a = std::log(r) + log_m1;
    const double b = std::log1p(-r) + psfv_log0[s];
    double r_new = 0.0;
    if (std::isfinite(a) || std::isfinite(b)) {
      const double mx = std::max(a, b);
      r_new = std::exp(a - mx) / (std::exp(a - mx) + std::exp(b - mx));
    }
    if (!std::isfinite(r_new)) throw NumericalError("non-finite existence");
    y.r_prob = std::min(r_new, kMaxExistence);
    if (std::isfinite(log_m1)) {
      normalize_log_weights(lw);
      y.w = std::move(lw);
    }
  }

  // LOS existence.
  if (cfg_.include_los && K > 0 && result.paths[0].kind == PathKind::kLos) {
    const PathEvidence& e = ev[0];
    double m1 = 0.0;
    for (std::size_t a = 0; a < W; ++a) m1 += am.ext(0, a) * e.R[a];
    const double m0 = am.ext(0, 0) * e.R_bar;
    if (m1 + m0 > 0.0)
      state_.los_existence[j] = std::min(m1 / (m1 + m0), kMaxExistence);
  }

  // New PSFVs become legacy for the next PA.
  for (std::size_t m = 0; m < M; ++m) {
    PsfvBelief y = std::move(births[m].belief);
    y.id = state_.next_id++;
    y.r_prob = am.new_existence[m];
    state_.psfvs.push_back(std::move(y));
  }
  result.births = M;

  {
    Stopwatch sw(timings_.resampling);
    resample(rng);
  }
  return result;
}

void Filter::resample(Rng& rng) {
  const std::size_t N = state_.agent.size();
  const double thr = cfg_.resample_threshold * static_cast<double>(N);
  if (effective_sample_size(state_.agent.w) < thr) {
    const auto idx = systematic_resample(state_.agent.w, N, rng);
    std::vector<AgentState> x(N);
    for (std::size_t i = 0; i < N; ++i) x[i] = state_.agent.x[idx[i]];
    state_.agent.x = std::move(x);
    state_.agent.w.assign(N, 1.0 / static_cast<double>(N));
  }
  for (PsfvBelief& y : state_.psfvs) {
    if (!(y.r_prob >= cfg_.p_pr)) continue;
    if (effective_sample_size(y.w) >= thr) continue;
    const auto idx = systematic_resample(y.w, N, rng);
    std::vector<Vec2> pos(N);
    std::vector<double> rho(N);
    for (std::size_t i = 0; i < N; ++i) {
      pos[i] = y.pos[idx[i]];
      rho[i] = y.rho[idx[i]];
    }
    // Systematic resampling sorts by ancestor; shuffle to keep the pairing
    // with the agent particles independent.
    for (std::size_t i = N; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pk(0, i - 1);
      const std::size_t k = pk(rng);
      std::swap(pos[i - 1], pos[k]);
      std::swap(rho[i - 1], rho[k]);
    }
    y.pos = std::move(pos);
    y.rho = std::move(rho);
    y.w.assign(N, 1.0 / static_cast<double>(N));
  }
}

StepEstimate Filter::detect_prune_extract() {
  StepEstimate out;
  out.agent = mmse_estimate(state_.agent);
  std::erase_if(state_.psfvs,
                [&](const PsfvBelief& y) { return y.r_prob < cfg_.p_pr; });
  for (const PsfvBelief& y : state_.psfvs)
    if (y.r_prob > cfg_.p_de) out.detected.push_back(mmse_estimate(y));
  return out;
}

}  // namespace rfslam
