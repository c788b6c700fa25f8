#ifndef BTINF_REDUCTION_HPP
#define BTINF_REDUCTION_HPP

#include <optional>
#include <string>

#include <Eigen/SVD>

#include "btinf/inference.hpp"
#include "btinf/lti.hpp"
#include "btinf/prior.hpp"

namespace btinf {

enum class PencilKind { standard, bt_q, bt_h };

inline const char* to_string(PencilKind p) {
  switch (p) {
    case PencilKind::standard: return "standard";
    case PencilKind::bt_q: return "BT-Q";
    case PencilKind::bt_h: return "BT-H";
  }
  return "unknown";
}

inline constexpr double kHankelRankTol = 1e-12;

struct BalancedReduction {
  Matrix T;               // d x r
  Matrix S;               // d x r, S^T T = I_r
  Vector hankel_values;   // delta_1..delta_r
  Vector full_spectrum;   // delta_1..delta_q, q = numerical rank
  PencilKind pencil = PencilKind::standard;
  bool has_ties = false;

  // Filled by project().
  Matrix A_r;
  Matrix C_r;
  std::optional<Matrix> B_r;
  double reduced_abscissa = 0.0;
  bool reduced_stable = false;

  int order() const { return static_cast<int>(T.cols()); }
  Matrix projector() const { return T * S.transpose(); }
};

/// One SVD of L^T R, truncated on demand.
class BalancingTransform {
 public:
  BalancingTransform(const GramianFactor& P_factor, const GramianFactor& Q_factor,
                     PencilKind pencil = PencilKind::standard)
      : R_(P_factor.factor), L_(Q_factor.factor), pencil_(pencil) {
    if (R_.rows() != L_.rows()) fail(ErrorCode::dimension_mismatch, "Gramian factors differ in row count");
    const Matrix M = L_.transpose() * R_;
    if (M.size() == 0) {
      rank_ = 0;
      sigma_.resize(0);
      return;
    }
    Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    U_ = svd.matrixU();
    Z_ = svd.matrixV();
    sigma_ = svd.singularValues();
    rank_ = 0;
    const double top = sigma_.size() ? sigma_(0) : 0.0;
    while (rank_ < sigma_.size() && top > 0.0 && sigma_(rank_) >= kHankelRankTol * top) ++rank_;
  }

  int rank() const { return static_cast<int>(rank_); }
  int dim() const { return static_cast<int>(R_.rows()); }
  const Vector& singular_values() const { return sigma_; }
  PencilKind pencil() const { return pencil_; }

  /// T_r = R Z_r D_r^{-1/2}, S_r = L U_r D_r^{-1/2}.
  BalancedReduction truncate(int r) const {
    if (r < 1) fail(ErrorCode::invalid_argument, "reduced order must be >= 1");
    if (r > rank_) {
      fail(ErrorCode::over_truncation, "requested order " + std::to_string(r) +
                                           " exceeds usable rank " + std::to_string(rank_));
    }
    BalancedReduction red;
    red.pencil = pencil_;
    const Vector inv_sqrt = sigma_.head(r).cwiseSqrt().cwiseInverse();
    red.T = R_ * Z_.leftCols(r) * inv_sqrt.asDiagonal();
    red.S = L_ * U_.leftCols(r) * inv_sqrt.asDiagonal();
    red.hankel_values = sigma_.head(r);
    red.full_spectrum = sigma_.head(rank_);
    const double top = sigma_(0);
    for (Eigen::Index i = 0; i + 1 < rank_; ++i) {
      if (sigma_(i) - sigma_(i + 1) <= kTieTol * top) red.has_ties = true;
    }
    return red;
  }

 private:
  Matrix R_, L_, U_, Z_;
  Vector sigma_;
  Eigen::Index rank_ = 0;
  PencilKind pencil_;
};

inline BalancedReduction balance_square_root(const GramianFactor& P_factor, const GramianFactor& Q_factor, int r) {
  return BalancingTransform(P_factor, Q_factor).truncate(r);
}

/// A_r = S^T A T, C_r = C T, B_r = S^T B.
inline BalancedReduction project(BalancedReduction red, const Matrix& A, const Matrix& C,
                                 const std::optional<Matrix>& B = std::nullopt) {
  if (A.rows() != red.T.rows() || C.cols() != red.T.rows()) {
    fail(ErrorCode::dimension_mismatch, "system does not match balancing bases");
  }
  red.A_r = red.S.transpose() * A * red.T;
  red.C_r = C * red.T;
  if (B) {
    if (B->rows() != A.rows()) fail(ErrorCode::dimension_mismatch, "B must have d rows");
    red.B_r = red.S.transpose() * *B;
  }
  red.reduced_abscissa = spectral_abscissa(red.A_r);
  red.reduced_stable = red.reduced_abscissa < -kStabilityTol * red.A_r.norm();
  return red;
}

inline BalancedReduction project(BalancedReduction red, const LtiSystem& sys) {
  return project(std::move(red), sys.A(), sys.C(), sys.B());
}

/// Balancing transform for the pencil (Gamma_pr, Q_m). The prior is
/// re-checked against sys.A because the stability guarantee depends on it.
inline BalancingTransform bt_q_transform(const LtiSystem& sys, const CompatiblePrior& prior) {
  if (prior.dim() != sys.dim()) fail(ErrorCode::dimension_mismatch, "prior and system differ in dimension");
  const auto chk = check_compatibility(sys.A(), prior.cov);
  if (!chk.compatible) {
    fail(ErrorCode::incompatible_prior, "BT-Q needs a compatible prior (residual abscissa " +
                                            std::to_string(chk.residual_abscissa) + ")");
  }
  const GramianFactor L = solve_lyapunov_factored(sys.A().transpose(), sys.whitened_C().transpose());
  return BalancingTransform(prior.factor, L, PencilKind::bt_q);
}

inline BalancedReduction bt_q_reduce(const LtiSystem& sys, const CompatiblePrior& prior, int r) {
  return project(bt_q_transform(sys, prior).truncate(r), sys);
}

/// Balancing transform for the pencil (Gamma_pr, H). When n k < d the Q-side
/// factor is the stacked d x (n k) matrix with blocks (L_eps^{-1} C e^{A t_i})^T
/// and H is never formed; otherwise H is formed and factored. H is not rescaled.
inline BalancingTransform bt_h_transform(const LtiSystem& sys, const CompatiblePrior& prior,
                                         const ObservationSchedule& schedule,
                                         FisherMode mode = FisherMode::auto_select) {
  if (prior.dim() != sys.dim()) fail(ErrorCode::dimension_mismatch, "prior and system differ in dimension");
  detail::require_increasing_times(schedule.times);
  const long n = static_cast<long>(schedule.times.size());
  const long k = sys.outputs();
  GramianFactor L;
  if (n * k < sys.dim()) {
    L.factor.resize(sys.dim(), n * k);
    const Matrix& Cw = sys.whitened_C();
    detail::for_each_propagator(sys.A(), schedule.times, [&](std::size_t i, const Matrix& Phi) {
      L.factor.middleCols(static_cast<Eigen::Index>(i) * k, k) = (Cw * Phi).transpose();
    });
    L.rank = static_cast<int>(n * k);
  } else {
    L = spsd_sqrt_factor(fisher_information(sys, schedule, mode));
  }
  return BalancingTransform(prior.factor, L, PencilKind::bt_h);
}

inline BalancedReduction bt_h_reduce(const LtiSystem& sys, const CompatiblePrior& prior,
                                     const ObservationSchedule& schedule, int r) {
  return project(bt_h_transform(sys, prior, schedule).truncate(r), sys);
}

namespace detail {

inline LtiSystem reduced_system(const BalancedReduction& red, const LtiSystem& sys) {
  if (red.A_r.size() == 0) fail(ErrorCode::invalid_argument, "reduction has no projected operators");
  return LtiSystem(red.A_r, red.B_r, red.C_r, sys.noise_cov());
}

}  // namespace detail

/// H_BT = S_r (sum_i e^{A_r^T t_i} C_r^T noise_cov^{-1} C_r e^{A_r t_i}) S_r^T.
inline Matrix bt_fisher_information(const BalancedReduction& red, const LtiSystem& sys,
                                    const ObservationSchedule& schedule,
                                    FisherMode mode = FisherMode::auto_select) {
  const LtiSystem rsys = detail::reduced_system(red, sys);
  const Matrix Hr = fisher_information(rsys, schedule, mode);
  return detail::symmetrized(red.S * Hr * red.S.transpose());
}

struct QmBt {
  Matrix lifted;   // S_r X_r S_r^T
  Matrix reduced;  // X_r
};

/// Reduced noisy observability Gramian X_r and its lift S_r X_r S_r^T.
inline QmBt qm_bt(const BalancedReduction& red, const LtiSystem& sys) {
  const LtiSystem rsys = detail::reduced_system(red, sys);
  if (!red.reduced_stable) fail(ErrorCode::unstable_system, "reduced dynamics are not stable");
  QmBt out;
  out.reduced = noisy_observability_gramian(rsys);
  out.lifted = detail::symmetrized(red.S * out.reduced * red.S.transpose());
  return out;
}

/// Posterior with H replaced by H_BT and the data term by
/// S_r sum_i e^{A_r^T t_i} C_r^T noise_cov^{-1} m_i. Only r-dimensional
/// dynamics are propagated.
inline Posterior bt_posterior(const BalancedReduction& red, const LtiSystem& sys, const CompatiblePrior& prior,
                              const MeasurementSet& ms, FisherMode mode = FisherMode::auto_select) {
  const std::string label = to_string(red.pencil);
  if (ms.values.cols() == 0) {
    Posterior p = prior_as_posterior(prior, label);
    p.rank = red.order();
    return p;
  }
  const LtiSystem rsys = detail::reduced_system(red, sys);
  const Matrix Hbt = detail::symmetrized(red.S * fisher_information(rsys, ms.schedule, mode) * red.S.transpose());
  const Vector g = red.S * data_adjoint(rsys, ms);
  return posterior_from_information(prior, Hbt, g, label, red.order());
}

}  // namespace btinf

#endif  // BTINF_REDUCTION_HPP
