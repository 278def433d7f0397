#include "rfslam/association.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rfslam {

std::size_t AssociationMarginals::argmax(std::size_t k) const {
  std::size_t best = 0;
  for (std::size_t a = 1; a <= measurements; ++a)
    if (p(k, a) > p(k, best)) best = a;
  return best;
}

AssociationMarginals solve_association(const AssociationProblem& problem,
                                       const AssociationOptions& opts) {
  const std::size_t K = problem.paths;
  const std::size_t M = problem.measurements;
  const std::size_t W = M + 1;
  if (problem.omega.size() != K * W || problem.new_evidence.size() != M ||
      problem.clutter.size() != M)
    throw std::invalid_argument("solve_association: inconsistent sizes");
  for (std::size_t k = 0; k < K; ++k) {
    if (!(problem.at(k, 0) > 0.0))
      throw std::invalid_argument("solve_association: nonpositive miss evidence");
    for (std::size_t a = 1; a <= M; ++a)
      if (!(problem.at(k, a) >= 0.0) || !std::isfinite(problem.at(k, a)))
        throw std::invalid_argument("solve_association: bad evidence");
  }
  std::vector<double> c(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (!(problem.new_evidence[m] >= 0.0) || !(problem.clutter[m] >= 0.0))
      throw std::invalid_argument("solve_association: bad measurement weight");
    c[m] = problem.clutter[m] + problem.new_evidence[m];
    if (!(c[m] > 0.0))
      throw std::invalid_argument("solve_association: zero measurement weight");
  }

  AssociationMarginals out;
  out.paths = K;
  out.measurements = M;

  // zeta[k*M + m]: measurement -> path; nu[k*M + m]: path -> measurement.
  std::vector<double> zeta(K * M), nu(K * M, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t m = 0; m < M; ++m) zeta[k * M + m] = 1.0 / c[m];

  // Leave-one-out sums are formed from prefix and suffix sums rather than
  // by subtraction, which cancels badly when one term dominates.
  std::vector<double> prefix(std::max(K, M) + 1), suffix(std::max(K, M) + 1);
  auto update_nu = [&] {
    for (std::size_t k = 0; k < K; ++k) {
      prefix[0] = 0.0;
      for (std::size_t m = 0; m < M; ++m)
        prefix[m + 1] = prefix[m] + problem.at(k, m + 1) * zeta[k * M + m];
      suffix[M] = 0.0;
      for (std::size_t m = M; m-- > 0;)
        suffix[m] = suffix[m + 1] + problem.at(k, m + 1) * zeta[k * M + m];
      for (std::size_t m = 0; m < M; ++m) {
        const double denom = problem.at(k, 0) + prefix[m] + suffix[m + 1];
        nu[k * M + m] = problem.at(k, m + 1) / denom;
      }
    }
  };

  out.converged = K == 0 || M == 0;
  for (int it = 0; it < opts.max_iterations && !out.converged; ++it) {
    update_nu();
    double change = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      prefix[0] = 0.0;
      for (std::size_t k = 0; k < K; ++k) prefix[k + 1] = prefix[k] + nu[k * M + m];
      suffix[K] = 0.0;
      for (std::size_t k = K; k-- > 0;) suffix[k] = suffix[k + 1] + nu[k * M + m];
      for (std::size_t k = 0; k < K; ++k) {
        double z = 1.0 / (c[m] + prefix[k] + suffix[k + 1]);
        if (opts.damping > 0.0)
          z = opts.damping * zeta[k * M + m] + (1.0 - opts.damping) * z;
        // Relative change, since the scale of zeta follows the column weights.
        const double ref = std::max(std::abs(zeta[k * M + m]), std::abs(z));
        if (ref > 0.0) change = std::max(change, std::abs(z - zeta[k * M + m]) / ref);
        zeta[k * M + m] = z;
      }
    }
    out.iterations = it + 1;
    out.residuals.push_back(change);
    if (change < opts.tolerance) out.converged = true;
  }
  update_nu();

  out.eta.assign(K * W, 0.0);
  out.eta_ext.assign(K * W, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double s = problem.at(k, 0), se = 1.0;
    out.eta[k * W] = problem.at(k, 0);
    out.eta_ext[k * W] = 1.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double z = zeta[k * M + m];
      out.eta[k * W + m + 1] = problem.at(k, m + 1) * z;
      out.eta_ext[k * W + m + 1] = z;
      s += problem.at(k, m + 1) * z;
      se += z;
    }
    for (std::size_t a = 0; a < W; ++a) {
      out.eta[k * W + a] /= s;
      out.eta_ext[k * W + a] /= se;
    }
  }

  out.meas_unassociated.assign(M, 1.0);
  out.new_existence.assign(M, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += nu[k * M + m];
    out.meas_unassociated[m] = c[m] / (c[m] + s);
    out.new_existence[m] = problem.new_evidence[m] / (c[m] + s);
  }
  return out;
}

}  // namespace rfslam
