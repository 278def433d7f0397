#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rfslam/association.hpp"
#include "rfslam/dynamics.hpp"
#include "rfslam/grid_map.hpp"
#include "rfslam/propagation.hpp"
#include "rfslam/thread_pool.hpp"

namespace rfslam {

struct PhysicalAnchor {
  int id = 0;
  Vec2 pos = Vec2::Zero();
};

/// Scaling of per-particle path validity before it enters the evidence.
enum class ValidityNormalization {
  kNone,        ///< raw alpha_V
  kPerPathMax,  ///< alpha_V divided by its maximum over the particles of a path
  kRelative,    ///< alpha_V relative to a uniform reference map, capped at 1
};

/// Fate of the existing-path mass whose occupancy configuration does not
/// support the path.
enum class BlockedPathModel {
  kDrop,  ///< no factor mass (the grid messages are exact for this model)
  kMiss,  ///< counted as a missed detection
};

struct FilterConfig {
  std::size_t num_particles = 2000;
  double p_de = 0.5;
  double p_pr = 0.1;
  double p_gate = 0.2;
  double mu_n = 0.05;
  ClutterModel clutter;
  MotionNoise noise;
  RadioConstants radio = RadioConstants::calibrated(30.0);
  Vec2 roi_min = Vec2::Zero();
  Vec2 roi_max = Vec2::Constant(5.0);
  GridSpec grid;
  ClassifyOptions classify;
  FusionOptions fusion;
  HitMessageForm hit_form = HitMessageForm::kExact;
  ValidityNormalization validity = ValidityNormalization::kRelative;
  double validity_reference = 0.5;  ///< p_occ of the reference map
  BlockedPathModel blocked = BlockedPathModel::kMiss;
  bool include_los = true;
  bool include_double_bounce = true;
  bool update_grid = true;
  /// Particles per path used for the grid messages (0: all).
  std::size_t grid_particles = 0;
  double los_existence_init = 0.9;
  double birth_geometric_fraction = 0.9;
  /// Weight birth proposals by the relative path validity (relative mode only).
  bool birth_validity = true;
  double rho_min = 0.1;
  double rho_max = 0.9;
  double resample_threshold = 0.5;  ///< fraction of N
  AssociationOptions association;

  Vec2 reference() const { return 0.5 * (roi_min + roi_max); }
};

struct FilterState {
  AgentParticles agent;
  std::vector<PsfvBelief> psfvs;
  OccupancyGrid grid;
  std::vector<double> los_existence;  ///< per PA
  int n = 0;
  std::uint64_t next_id = 1;
};

/// A path of the current PA: LOS (s = s2 = -1), single bounce (s2 = -1) or
/// double bounce via psfvs[s] then psfvs[s2].
struct PathRef {
  PathKind kind = PathKind::kLos;
  int s = -1;
  int s2 = -1;
};

/// Measurement evaluation of one path.
///
/// With g_i(a) = alpha_i L_i(a) the per-particle pseudo likelihood (L_i(0)
/// the miss term), partner weight pi_i and existence r:
/// R(a) = r sum_i w_i pi_i g_i(a) and R_bar = 1 - r. Inside update_pa the
/// measurement columns are rescaled to keep the ratios finite.
struct PathEvidence {
  PathRef ref;
  double r = 0.0;
  std::vector<double> R;  ///< size M + 1
  double R_bar = 0.0;
  double blocked = 0.0;   ///< r sum_i w_i pi_i (1 - alpha_i) under kMiss
  double log_alpha_max = 0.0;
  std::size_t columns = 0;
  std::vector<double> g;        ///< N x (M + 1)
  std::vector<double> partner;  ///< N
  std::vector<double> alpha;    ///< N, normalized validity

  double omega(std::size_t a) const { return R[a] + (a == 0 ? R_bar : 0.0); }
};

struct BirthCandidate {
  PsfvBelief belief;
  double new_evidence = 0.0;  ///< scaled like the measurement column
};

struct PhaseTimings {
  double synthesis = 0.0;
  double ray_casting = 0.0;
  double evidence = 0.0;
  double association = 0.0;
  double fusion = 0.0;
  double birth = 0.0;
  double resampling = 0.0;
};

struct PaUpdateResult {
  std::vector<PathRef> paths;
  AssociationMarginals association;
  std::size_t births = 0;
  std::size_t psfvs_before = 0;
};

struct StepEstimate {
  AgentState agent;
  std::vector<PsfvEstimate> detected;
};

class Filter {
 public:
  Filter(FilterConfig cfg, std::vector<PhysicalAnchor> pas,
         ThreadPool* pool = nullptr);

  const FilterConfig& config() const { return cfg_; }
  const std::vector<PhysicalAnchor>& anchors() const { return pas_; }
  FilterState& state() { return state_; }
  const FilterState& state() const { return state_; }
  PhaseTimings& timings() { return timings_; }
  const VertexFrame& frame() const { return frame_; }

  void initialize(const AgentState& prior_center, const AgentPrior& prior,
                  OccupancyGrid grid_prior, Rng& rng);

  /// Time prediction for PA 1 of a new step.
  void predict(Rng& rng);

  /// Paths evaluated for PA j given the current PSFV set.
  std::vector<PathRef> enumerate_paths() const;

  PathEvidence evaluate_los(std::size_t j, std::span<const Measurement> z);
  PathEvidence evaluate_single_bounce(std::size_t j, std::size_t s,
                                      std::span<const Measurement> z);
  PathEvidence evaluate_double_bounce(std::size_t j, std::size_t s,
                                      std::size_t s2,
                                      std::span<const Measurement> z);

  /// Birth candidates, one per measurement, with unscaled new-path evidence.
  std::vector<BirthCandidate> birth_new_psfvs(std::size_t j,
                                              std::span<const Measurement> z,
                                              Rng& rng);

  PaUpdateResult update_pa(std::size_t j, std::span<const Measurement> z,
                           Rng& rng);

  /// Removes PSFVs below p_pr and returns MMSE estimates of the agent and of
  /// the PSFVs above p_de.
  StepEstimate detect_prune_extract();

  /// Reflector line of a PSFV particle; nullopt for a degenerate vertex.
  std::optional<Line> line_of(const Vec2& vertex) const {
    return frame_.line_of(vertex);
  }

  struct MeasurementCache;  ///< per-PA measurement constants

 private:
  struct Worker {
    CellClassifier classifier;
    PathGeometry geometry;
    CellSets sets;
  };
  struct RawPath {
    PathRef ref;
    double r = 0.0;
    std::vector<double> log_like;   ///< N x M, log of f p_d / (mu_fa f_fa)
    std::vector<double> log_alpha;  ///< N
    std::vector<double> miss;       ///< N, 1 - p_d
    std::vector<double> partner;    ///< N
  };

  RawPath evaluate_raw(std::size_t j, const PathRef& ref,
                       const MeasurementCache& mc);
  PathEvidence finalize(const RawPath& raw, std::span<const double> scale,
                        std::size_t measurements) const;
  PathEvidence evaluate_one(std::size_t j, const PathRef& ref,
                            std::span<const Measurement> z);
  bool particle_path(std::size_t j, const PathRef& ref, std::size_t i,
                     PathGeometry& out, double& beta) const;
  std::vector<BirthCandidate> propose_births(std::size_t j,
                                             const MeasurementCache& mc,
                                             Rng& rng,
                                             std::vector<double>& log_new);
  void resample(Rng& rng);
  void parallel_for(std::size_t n,
                    const std::function<void(std::size_t, std::size_t,
                                             std::size_t)>& fn);

  FilterConfig cfg_;
  std::vector<PhysicalAnchor> pas_;
  ThreadPool* pool_;
  VertexFrame frame_;
  DetectionModel detection_;
  FilterState state_;
  PhaseTimings timings_;
  std::vector<Worker> workers_;
  std::unique_ptr<ValidityTable> validity_;
};

}  // namespace rfslam
