#ifndef BTINF_OPTIMAL_HPP
#define BTINF_OPTIMAL_HPP

#include <cmath>
#include <string>

#include "btinf/inference.hpp"
#include "btinf/linalg.hpp"
#include "btinf/prior.hpp"

namespace btinf {

/// Generalized eigenpairs (tau_i^2, w_i) of (H, Gamma_pr^{-1}) with
/// w_i^T Gamma_pr^{-1} w_j = delta_ij, and w~_i = Gamma_pr^{-1} w_i.
struct PencilDecomposition {
  Vector tau_sq;
  Matrix W;
  Matrix W_tilde;
  int zero_count = 0;  // pairs with tau^2 at or below round-off
  bool has_ties = false;

  int dim() const { return static_cast<int>(tau_sq.size()); }
  bool tie_at(int r) const {
    if (r <= 0 || r >= dim()) return false;
    return std::abs(std::sqrt(tau_sq(r - 1)) - std::sqrt(tau_sq(r))) <= kTieTol * std::sqrt(tau_sq(0));
  }
};

inline PencilDecomposition spantini_eigenpairs(const Matrix& H, const CompatiblePrior& prior) {
  const GeneralizedEigenpairs g = sym_def_geig(H, prior.factor);
  PencilDecomposition p;
  p.tau_sq = g.values;
  p.W = g.vectors;
  // Gamma_pr^{-1} w = R^{-T} R^{-1} w; R need not be triangular.
  const Eigen::PartialPivLU<Matrix> lu(prior.factor.factor);
  p.W_tilde = lu.transpose().solve(lu.solve(p.W));
  const double top = p.tau_sq.size() ? p.tau_sq(0) : 0.0;
  for (Eigen::Index i = 0; i < p.tau_sq.size(); ++i) {
    if (p.tau_sq(i) <= 1e-14 * std::max(top, 1.0)) ++p.zero_count;
  }
  p.has_ties = g.has_ties;
  return p;
}

namespace detail {

inline void require_rank(int r, int d) {
  if (r < 0 || r > d) fail(ErrorCode::invalid_argument, "rank must lie in [0, d]");
}

}  // namespace detail

/// Gamma_pr - sum_{i<=r} tau_i^2 / (1 + tau_i^2) w_i w_i^T.
inline Matrix olru_covariance(const CompatiblePrior& prior, const PencilDecomposition& pencil, int r) {
  detail::require_rank(r, pencil.dim());
  if (prior.dim() != pencil.dim()) fail(ErrorCode::dimension_mismatch, "prior and pencil differ");
  const Eigen::ArrayXd t = pencil.tau_sq.head(r).array();
  const Vector coef = (t / (1.0 + t)).matrix();
  const Matrix Wr = pencil.W.leftCols(r);
  return detail::symmetrized(prior.cov - Wr * coef.asDiagonal() * Wr.transpose());
}

/// sum ln^2(sigma_i) over the eigenvalues of the pencil (A, B).
inline double forstner_distance(const Matrix& Acov, const Matrix& Bcov) {
  detail::require_square(Acov, "first covariance");
  if (Bcov.rows() != Acov.rows() || Bcov.cols() != Acov.cols()) {
    fail(ErrorCode::dimension_mismatch, "covariances differ in size");
  }
  detail::require_finite(Acov, "first covariance");
  detail::require_finite(Bcov, "second covariance");
  Eigen::LLT<Matrix> lb(detail::symmetrized(Bcov));
  if (lb.info() != Eigen::Success) fail(ErrorCode::indefinite_input, "second covariance is not SPD");
  // Eigenvalues of L^{-1} A L^{-T}.
  const Matrix X = lb.matrixL().solve(detail::symmetrized(Acov));
  const Matrix M = detail::symmetrized(lb.matrixL().solve(X.transpose()));
  const Vector s = Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(s(0) > 0.0)) fail(ErrorCode::indefinite_input, "first covariance is not SPD");
  return s.array().log().square().sum();
}

/// sum_{i>r} ln^2(1 / (1 + tau_i^2)).
inline double olru_optimal_distance(const PencilDecomposition& pencil, int r) {
  detail::require_rank(r, pencil.dim());
  double acc = 0.0;
  for (int i = r; i < pencil.dim(); ++i) {
    const double l = std::log1p(pencil.tau_sq(i));
    acc += l * l;
  }
  return acc;
}

/// Pi_r = sum_{i<=r} w~_i w_i^T.
inline Matrix oblique_projector(const PencilDecomposition& pencil, int r) {
  detail::require_rank(r, pencil.dim());
  return pencil.W_tilde.leftCols(r) * pencil.W.leftCols(r).transpose();
}

struct ProjectedForward {
  Matrix projector;  // Pi_r
  Matrix H_hat;      // Pi_r H Pi_r^T

  /// G_hat^T Gamma_obs^{-1} m = Pi_r (G^T Gamma_obs^{-1} m).
  Vector apply_adjoint(const Vector& full_adjoint) const { return projector * full_adjoint; }
};

/// Projected Fisher information from the full H; the projected forward map
/// itself is never formed. Callers supply H computed with full dynamics.
inline ProjectedForward projected_forward_quantities(const PencilDecomposition& pencil, const Matrix& H, int r) {
  if (H.rows() != pencil.dim() || H.cols() != pencil.dim()) {
    fail(ErrorCode::dimension_mismatch, "H does not match pencil dimension");
  }
  ProjectedForward out;
  out.projector = oblique_projector(pencil, r);
  out.H_hat = detail::symmetrized(out.projector * H * out.projector.transpose());
  return out;
}

inline ProjectedForward projected_forward_quantities(const PencilDecomposition& pencil, const LtiSystem& sys,
                                                     const ObservationSchedule& schedule, int r) {
  return projected_forward_quantities(pencil, fisher_information(sys, schedule), r);
}

/// Optimal low-rank mean: olru_covariance times the projected data term.
inline Vector olr_mean(const CompatiblePrior& prior, const PencilDecomposition& pencil, const Vector& full_adjoint,
                       int r) {
  const Matrix cov = olru_covariance(prior, pencil, r);
  return cov * (oblique_projector(pencil, r) * full_adjoint);
}

/// Optimal low-rank-update mean: olru_covariance times the full data term.
inline Vector olru_mean(const CompatiblePrior& prior, const PencilDecomposition& pencil, const Vector& full_adjoint,
                        int r) {
  return olru_covariance(prior, pencil, r) * full_adjoint;
}

inline Vector olr_mean(const CompatiblePrior& prior, const PencilDecomposition& pencil, const LtiSystem& sys,
                       const MeasurementSet& ms, int r) {
  return olr_mean(prior, pencil, data_adjoint(sys, ms), r);
}

inline Vector olru_mean(const CompatiblePrior& prior, const PencilDecomposition& pencil, const LtiSystem& sys,
                        const MeasurementSet& ms, int r) {
  return olru_mean(prior, pencil, data_adjoint(sys, ms), r);
}

}  // namespace btinf

#endif  // BTINF_OPTIMAL_HPP
