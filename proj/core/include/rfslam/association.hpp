#pragma once

#include <cstddef>
#include <vector>

namespace rfslam {

/// Evidence for K legacy paths and M measurements.
///
/// `omega` is row-major K x (M + 1); column 0 is the miss evidence of the
/// path, column m the evidence that the path generated measurement m.
/// `new_evidence[m]` is the new-path evidence and `clutter[m]` the false
/// alarm weight of measurement m + 1 (1 unless the column was rescaled), so an
/// unassociated measurement weighs clutter + new_evidence.
struct AssociationProblem {
  std::size_t paths = 0;
  std::size_t measurements = 0;
  std::vector<double> omega;
  std::vector<double> new_evidence;
  std::vector<double> clutter;

  AssociationProblem() = default;
  AssociationProblem(std::size_t k, std::size_t m)
      : paths(k),
        measurements(m),
        omega(k * (m + 1), 0.0),
        new_evidence(m, 0.0),
        clutter(m, 1.0) {}

  double& at(std::size_t k, std::size_t a) { return omega[k * (measurements + 1) + a]; }
  double at(std::size_t k, std::size_t a) const {
    return omega[k * (measurements + 1) + a];
  }
};

struct AssociationMarginals {
  std::size_t paths = 0;
  std::size_t measurements = 0;
  /// Posterior p(a_k = a), row-major K x (M + 1).
  std::vector<double> eta;
  /// Message from the association variable into the path factor (everything
  /// except the path's own evidence), normalized per row.
  std::vector<double> eta_ext;
  /// Posterior probability that measurement m is not generated by a legacy
  /// path, and that it is generated by a new feature.
  std::vector<double> meas_unassociated;
  std::vector<double> new_existence;
  int iterations = 0;
  bool converged = true;
  /// Max message change per iteration.
  std::vector<double> residuals;

  double p(std::size_t k, std::size_t a) const { return eta[k * (measurements + 1) + a]; }
  double ext(std::size_t k, std::size_t a) const {
    return eta_ext[k * (measurements + 1) + a];
  }
  /// Most probable association of path k; ties go to the lower index.
  std::size_t argmax(std::size_t k) const;
};

struct AssociationOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;
  double damping = 0.0;
};

/// Loopy BP over the exclusion constraints. Throws std::invalid_argument for
/// negative evidence or a row without positive miss evidence.
AssociationMarginals solve_association(const AssociationProblem& problem,
                                       const AssociationOptions& opts = {});

}  // namespace rfslam
