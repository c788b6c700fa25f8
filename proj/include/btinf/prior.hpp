#ifndef BTINF_PRIOR_HPP
#define BTINF_PRIOR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "btinf/linalg.hpp"
#include "btinf/random.hpp"

namespace btinf {

enum class PriorProvenance { spin_up, modified, user_asserted };

inline const char* to_string(PriorProvenance p) {
  switch (p) {
    case PriorProvenance::spin_up: return "spin_up";
    case PriorProvenance::modified: return "modified";
    case PriorProvenance::user_asserted: return "user_asserted";
  }
  return "unknown";
}

/// Prior covariance with A Gamma + Gamma A^T negative semidefinite.
struct CompatiblePrior {
  Matrix cov;
  GramianFactor factor;  // square, cov = R R^T
  double residual_abscissa = 0.0;
  PriorProvenance provenance = PriorProvenance::user_asserted;
  double ridge = 0.0;

  int dim() const { return static_cast<int>(cov.rows()); }
};

inline constexpr double kCompatibilityTol = 1e-10;

struct CompatibilityCheck {
  bool compatible = false;
  double residual_abscissa = 0.0;
};

/// Compatible iff the largest eigenvalue of A G + G A^T is at most
/// tol * |A G + G A^T|_F.
inline CompatibilityCheck check_compatibility(const Matrix& A, const Matrix& G,
                                              double tol = kCompatibilityTol) {
  detail::require_square(A, "A");
  if (G.rows() != A.rows() || G.cols() != A.cols()) {
    fail(ErrorCode::dimension_mismatch, "prior covariance and A differ in size");
  }
  detail::require_finite(G, "prior covariance");
  const Matrix M = detail::symmetrized(A * G + G * A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  return {top <= tol * M.norm(), top};
}

namespace detail {

// Square Cholesky factor of an SPD covariance; rejects anything else.
inline GramianFactor cholesky_factor(const Matrix& G, const char* what) {
  Eigen::LLT<Matrix> llt(symmetrized(G));
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::indefinite_input, std::string(what) + " is not positive definite");
  }
  GramianFactor f;
  f.factor = llt.matrixL();
  f.rank = static_cast<int>(G.rows());
  f.clip_tol = 0.0;
  return f;
}

}  // namespace detail

/// Wraps a user covariance after checking SPD and compatibility.
inline CompatiblePrior assert_prior(const Matrix& A, const Matrix& G, double tol = kCompatibilityTol) {
  detail::require_symmetric(G, "prior covariance", 1e-10);
  CompatiblePrior p;
  p.cov = detail::symmetrized(G);
  p.factor = detail::cholesky_factor(p.cov, "prior covariance");
  const auto chk = check_compatibility(A, p.cov, tol);
  p.residual_abscissa = chk.residual_abscissa;
  if (!chk.compatible) {
    fail(ErrorCode::incompatible_prior,
         "prior is not compatible with A (residual abscissa " + std::to_string(chk.residual_abscissa) + ")");
  }
  p.provenance = PriorProvenance::user_asserted;
  return p;
}

/// Stationary covariance of dx = A x dt + B dW: the reachability Gramian.
///
/// A singular Gramian (unreachable pair) is rejected unless ridge > 0, in
/// which case B B^T + ridge * I is used instead.
inline CompatiblePrior spin_up_prior(const Matrix& A, const Matrix& B, double ridge = 0.0) {
  detail::require_square(A, "A");
  if (B.rows() != A.rows()) fail(ErrorCode::dimension_mismatch, "B must have d rows");
  if (ridge < 0.0 || !std::isfinite(ridge)) fail(ErrorCode::invalid_argument, "ridge must be >= 0");
  Matrix W = B * B.transpose();
  if (ridge > 0.0) W.diagonal().array() += ridge;
  CompatiblePrior p;
  p.cov = solve_lyapunov(A, W);
  Eigen::LLT<Matrix> llt(p.cov);
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(p.cov, Eigen::EigenvaluesOnly).eigenvalues();
  if (llt.info() != Eigen::Success || ev(0) <= 1e-13 * ev(ev.size() - 1)) {
    fail(ErrorCode::rank_deficient,
         "spin-up prior is singular (pair (A, B) not reachable); supply a ridge");
  }
  p.factor.factor = llt.matrixL();
  p.factor.rank = p.dim();
  const auto chk = check_compatibility(A, p.cov);
  p.residual_abscissa = chk.residual_abscissa;
  p.provenance = PriorProvenance::spin_up;
  p.ridge = ridge;
  return p;
}

struct ModifiedPrior {
  CompatiblePrior prior;
  Matrix delta;     // Gamma_pr - Gamma_0, symmetric PSD
  Matrix E_factor;  // delta = E E^T
  Matrix residual_target;  // negative part M_minus of A G0 + G0 A^T
};

/// Smallest-effort compatible modification of an SPD Gamma_0.
///
/// M0 = A G0 + G0 A^T is split into its nonpositive part M_minus and its
/// positive part U+ L+ U+^T. Delta solves A Delta + Delta A^T + U+ L+ U+^T = 0,
/// so A (G0 + Delta) + (G0 + Delta) A^T = M_minus. The factor of the result
/// is the transposed triangular factor of the QR of [L0^T; E^T].
inline ModifiedPrior make_compatible(const Matrix& A, const Matrix& G0, double tol = kCompatibilityTol) {
  detail::require_square(A, "A");
  if (G0.rows() != A.rows() || G0.cols() != A.cols()) {
    fail(ErrorCode::dimension_mismatch, "Gamma_0 and A differ in size");
  }
  detail::require_symmetric(G0, "Gamma_0", 1e-10);
  const Matrix G = detail::symmetrized(G0);
  const GramianFactor L0 = detail::cholesky_factor(G, "Gamma_0");
  if (!is_stable(A)) fail(ErrorCode::unstable_system, "make_compatible needs a stable A");
  const int d = static_cast<int>(A.rows());

  const Matrix M0 = detail::symmetrized(A * G + G * A.transpose());
  ModifiedPrior out;
  const auto chk = check_compatibility(A, G, tol);
  if (chk.compatible) {
    out.prior.cov = G;
    out.prior.factor = L0;
    out.prior.residual_abscissa = chk.residual_abscissa;
    out.prior.provenance = PriorProvenance::user_asserted;
    out.delta = Matrix::Zero(d, d);
    out.E_factor = Matrix::Zero(d, 0);
    out.residual_target = M0;
    return out;
  }

  const NsdSplit split = nearest_nsd_split(M0);
  const GramianFactor E = solve_lyapunov_factored(A, split.positive_factor);
  out.E_factor = E.factor;
  out.delta = detail::symmetrized(E.factor * E.factor.transpose());
  out.residual_target = split.negative_part;

  Matrix stacked(d + E.factor.cols(), d);
  stacked << L0.factor.transpose(), E.factor.transpose();
  Eigen::HouseholderQR<Matrix> qr(stacked);
  Matrix Rt = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  // Fix signs so the factor has a positive diagonal, like a Cholesky factor.
  for (int i = 0; i < d; ++i) {
    if (Rt(i, i) < 0.0) Rt.row(i) *= -1.0;
  }
  out.prior.factor.factor = Rt.transpose();
  out.prior.factor.rank = d;
  out.prior.cov = detail::symmetrized(G + out.delta);
  const auto after = check_compatibility(A, out.prior.cov, tol);
  out.prior.residual_abscissa = after.residual_abscissa;
  out.prior.provenance = PriorProvenance::modified;
  return out;
}

struct MonteCarloCov {
  Matrix cov;
  Matrix std_errors;
};

/// Euler-Maruyama estimate of the stationary covariance of
/// dx = A x dt + B dW, started from x = 0 at -t_burn and read at 0.
///
/// Path p uses the stream CounterRng(seed, p), so the result does not depend
/// on the number of threads. The mean is known to be zero and is not
/// subtracted. Requires dt <= 0.1 / |abscissa|, dt * rho(A) <= 0.1 and
/// t_burn >= 10 / |abscissa|.
inline MonteCarloCov monte_carlo_stationary_cov(const Matrix& A, const Matrix& B, int n_paths,
                                                double t_burn, double dt, std::uint64_t seed,
                                                int threads = 1) {
  detail::require_square(A, "A");
  if (B.rows() != A.rows()) fail(ErrorCode::dimension_mismatch, "B must have d rows");
  if (n_paths < 2) fail(ErrorCode::invalid_argument, "need at least two paths");
  const double abscissa = spectral_abscissa(A);
  if (!(abscissa < -kStabilityTol * A.norm())) {
    fail(ErrorCode::unstable_system, "Monte Carlo needs a stable A");
  }
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Matrix>(A, false).eigenvalues();
  const double rho = ev.cwiseAbs().maxCoeff();
  if (!(dt > 0.0) || dt > 0.1 / std::abs(abscissa) || dt * rho > 0.1) {
    fail(ErrorCode::invalid_argument, "Euler-Maruyama step too coarse for A");
  }
  if (t_burn < 10.0 / std::abs(abscissa)) {
    fail(ErrorCode::invalid_argument, "burn-in shorter than 10 / |abscissa|");
  }
  const int d = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  const long steps = static_cast<long>(std::ceil(t_burn / dt));
  const Matrix step = Matrix::Identity(d, d) + dt * A;
  const Matrix noise = std::sqrt(dt) * B;

  Matrix finals(d, n_paths);
  auto run = [&](int begin, int end) {
    Vector x(d), w(m);
    for (int p = begin; p < end; ++p) {
      CounterRng rng(seed, static_cast<std::uint64_t>(p));
      x.setZero();
      for (long s = 0; s < steps; ++s) {
        for (int j = 0; j < m; ++j) w(j) = rng.normal();
        x = step * x + noise * w;
      }
      finals.col(p) = x;
    }
  };
  threads = std::max(1, std::min(threads, n_paths));
  if (threads == 1) {
    run(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back(run, n_paths * t / threads, n_paths * (t + 1) / threads);
    }
    for (auto& th : pool) th.join();
  }

  MonteCarloCov out;
  const double np = static_cast<double>(n_paths);
  out.cov = finals * finals.transpose() / np;
  out.std_errors.resize(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const Eigen::ArrayXd prod = finals.row(i).array() * finals.row(j).array();
      const double var = (prod - out.cov(i, j)).square().sum() / (np - 1.0);
      out.std_errors(i, j) = std::sqrt(var / np);
    }
  }
  return out;
}

}  // namespace btinf

#endif  // BTINF_PRIOR_HPP
