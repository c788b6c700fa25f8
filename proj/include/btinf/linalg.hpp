#ifndef BTINF_LINALG_HPP
#define BTINF_LINALG_HPP

// Dense kernels: matrix exponential, Lyapunov solvers, the symmetric-definite
// generalized eigenproblem and semidefinite square-root factors.
//
// All matrices are Eigen::MatrixXd, i.e. column-major doubles.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "btinf/error.hpp"

namespace btinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tall factor F of a symmetric positive semidefinite matrix, F * F^T = M.
struct GramianFactor {
  Matrix factor;          // d x rank
  int rank = 0;
  double clip_tol = 0.0;  // relative eigenvalue cutoff used to build the factor

  Matrix product() const { return factor * factor.transpose(); }
  int dim() const { return static_cast<int>(factor.rows()); }
};

/// Eigenpairs of the pencil (Q, P^{-1}): Q v = lambda P^{-1} v, v^T P^{-1} v = 1.
struct GeneralizedEigenpairs {
  Vector values;   // descending, clamped at zero
  Matrix vectors;  // columns v_i
  bool has_ties = false;
};

inline constexpr double kDefaultClipTol = 1e-12;
inline constexpr double kStabilityTol = 1e-10;
inline constexpr double kTieTol = 1e-8;
// Relative residual a Lyapunov solve must reach before it is returned.
inline constexpr double kLyapunovResidualTol = 1e-8;

namespace detail {

inline void require_square(const Matrix& M, const char* what) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    fail(ErrorCode::dimension_mismatch,
         std::string(what) + " must be square and nonempty, got " +
             std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  }
}

inline void require_finite(const Matrix& M, const char* what) {
  if (!M.allFinite()) {
    fail(ErrorCode::non_finite, std::string(what) + " has non-finite entries");
  }
}

inline void require_symmetric(const Matrix& M, const char* what, double rtol) {
  const double scale = M.norm();
  if ((M - M.transpose()).norm() > rtol * std::max(scale, 1e-300)) {
    fail(ErrorCode::asymmetric_input, std::string(what) + " is not symmetric");
  }
}

inline Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

// Diagonal block layout (start, size) of a real Schur form.
inline std::vector<std::pair<int, int>> schur_blocks(const Matrix& T) {
  std::vector<std::pair<int, int>> blocks;
  const int n = static_cast<int>(T.rows());
  for (int i = 0; i < n;) {
    if (i + 1 < n && T(i + 1, i) != 0.0) {
      blocks.emplace_back(i, 2);
      i += 2;
    } else {
      blocks.emplace_back(i, 1);
      i += 1;
    }
  }
  return blocks;
}

inline double schur_abscissa(const Matrix& T,
                             const std::vector<std::pair<int, int>>& blocks) {
  double best = -std::numeric_limits<double>::infinity();
  for (auto [i, s] : blocks) {
    const double re = s == 1 ? T(i, i) : 0.5 * (T(i, i) + T(i + 1, i + 1));
    best = std::max(best, re);
  }
  return best;
}

// Pade coefficients for scaling and squaring (Higham 2005).
inline constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
inline constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0,
                                                 420.0,   30.0,    1.0};
inline constexpr std::array<double, 8> kPade7 = {
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0};
inline constexpr std::array<double, 10> kPade9 = {
    17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
    2162160.0,     110880.0,     3960.0,       90.0,        1.0};
inline constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};
inline constexpr std::array<double, 5> kPadeTheta = {
    1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1,
    2.097847961257068e0, 5.371920351148152e0};

template <std::size_t N>
Matrix pade_low_order(const Matrix& X, const std::array<double, N>& b) {
  const Eigen::Index n = X.rows();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix X2 = X * X;
  Matrix odd = b[1] * I;
  Matrix even = b[0] * I;
  Matrix power = I;
  for (std::size_t k = 2; k < N; k += 2) {
    power = power * X2;
    even += b[k] * power;
    if (k + 1 < N) odd += b[k + 1] * power;
  }
  const Matrix U = X * odd;
  return (even - U).partialPivLu().solve(even + U);
}

}  // namespace detail

/// Matrix exponential e^{A t}.
///
/// Scaling and squaring with diagonal Pade approximants of degree 3, 5, 7, 9
/// or 13 selected by the 1-norm of A t (Higham 2005 thresholds). Only the
/// degree-13 branch scales, by 2^-s with s = ceil(log2(|At|_1 / theta_13)),
/// and the result is squared s times.
inline Matrix mat_exp(const Matrix& A, double t) {
  detail::require_square(A, "mat_exp input");
  detail::require_finite(A, "mat_exp input");
  if (!std::isfinite(t)) fail(ErrorCode::non_finite, "mat_exp time is not finite");

  Matrix X = A * t;
  const double norm1 = X.cwiseAbs().colwise().sum().maxCoeff();
  using namespace detail;
  if (norm1 <= kPadeTheta[0]) return pade_low_order(X, kPade3);
  if (norm1 <= kPadeTheta[1]) return pade_low_order(X, kPade5);
  if (norm1 <= kPadeTheta[2]) return pade_low_order(X, kPade7);
  if (norm1 <= kPadeTheta[3]) return pade_low_order(X, kPade9);

  int squarings = 0;
  if (norm1 > kPadeTheta[4]) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / kPadeTheta[4])));
    X /= std::ldexp(1.0, squarings);
  }
  const auto& b = kPade13;
  const Eigen::Index n = X.rows();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix X2 = X * X;
  const Matrix X4 = X2 * X2;
  const Matrix X6 = X4 * X2;
  const Matrix U = X * (X6 * (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 +
                        b[5] * X4 + b[3] * X2 + b[1] * I);
  const Matrix V = X6 * (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 +
                   b[4] * X4 + b[2] * X2 + b[0] * I;
  Matrix E = (V - U).partialPivLu().solve(V + U);
  for (int k = 0; k < squarings; ++k) E = E * E;
  return E;
}

/// Maximum real part over the eigenvalues of A.
inline double spectral_abscissa(const Matrix& A) {
  detail::require_square(A, "spectral_abscissa input");
  detail::require_finite(A, "spectral_abscissa input");
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Matrix>(A, false).eigenvalues();
  return ev.real().maxCoeff();
}

/// A is stable iff its abscissa is below -kStabilityTol * |A|_F.
inline bool is_stable(const Matrix& A) {
  return spectral_abscissa(A) < -kStabilityTol * A.norm();
}

/// |A X + X A^T + W|_F.
inline double lyapunov_residual(const Matrix& A, const Matrix& X, const Matrix& W) {
  return (A * X + X * A.transpose() + W).norm();
}

/// Solves A X + X A^T + W = 0 for stable A by Bartels-Stewart on the real
/// Schur form of A. The returned X is exactly symmetric.
inline Matrix solve_lyapunov(const Matrix& A, const Matrix& W) {
  detail::require_square(A, "Lyapunov coefficient");
  detail::require_finite(A, "Lyapunov coefficient");
  detail::require_finite(W, "Lyapunov right-hand side");
  if (W.rows() != A.rows() || W.cols() != A.cols()) {
    fail(ErrorCode::dimension_mismatch, "Lyapunov right-hand side has wrong size");
  }
  detail::require_symmetric(W, "Lyapunov right-hand side", 1e-10);

  const int n = static_cast<int>(A.rows());
  Eigen::RealSchur<Matrix> schur(A);
  if (schur.info() != Eigen::Success) {
    fail(ErrorCode::numerical_failure, "real Schur decomposition did not converge");
  }
  const Matrix& T = schur.matrixT();
  const Matrix& U = schur.matrixU();
  const auto blocks = detail::schur_blocks(T);
  const double abscissa = detail::schur_abscissa(T, blocks);
  if (!(abscissa < -kStabilityTol * A.norm())) {
    fail(ErrorCode::unstable_system,
         "Lyapunov coefficient is not stable (spectral abscissa " +
             std::to_string(abscissa) + ")");
  }

  // T Y + Y T^T = -F, solved block by block from the bottom-right corner.
  const Matrix F = U.transpose() * detail::symmetrized(W) * U;
  Matrix Y = Matrix::Zero(n, n);
  const int nb = static_cast<int>(blocks.size());
  for (int jb = nb - 1; jb >= 0; --jb) {
    const auto [j0, nj] = blocks[jb];
    const int je = j0 + nj;
    for (int ib = nb - 1; ib >= 0; --ib) {
      const auto [i0, ni] = blocks[ib];
      const int ie = i0 + ni;
      Matrix rhs = -F.block(i0, j0, ni, nj);
      if (ie < n) rhs.noalias() -= T.block(i0, ie, ni, n - ie) * Y.block(ie, j0, n - ie, nj);
      if (je < n) {
        rhs.noalias() -= Y.block(i0, je, ni, n - je) * T.block(j0, je, nj, n - je).transpose();
      }
      if (ni == 1 && nj == 1) {
        Y(i0, j0) = rhs(0, 0) / (T(i0, i0) + T(j0, j0));
        continue;
      }
      // (I kron T_ii + T_jj kron I) vec(Y_ij) = vec(rhs)
      const int m = ni * nj;
      Matrix K = Matrix::Zero(m, m);
      const Matrix Tii = T.block(i0, i0, ni, ni);
      const Matrix Tjj = T.block(j0, j0, nj, nj);
      for (int q = 0; q < nj; ++q) {
        K.block(q * ni, q * ni, ni, ni) += Tii;
        for (int p = 0; p < nj; ++p) {
          K.block(q * ni, p * ni, ni, ni) += Tjj(q, p) * Matrix::Identity(ni, ni);
        }
      }
      const Vector sol =
          K.partialPivLu().solve(Eigen::Map<const Vector>(rhs.data(), m));
      Y.block(i0, j0, ni, nj) = Eigen::Map<const Matrix>(sol.data(), ni, nj);
    }
  }

  Matrix X = detail::symmetrized(U * Y * U.transpose());
  const double residual = lyapunov_residual(A, X, W);
  if (!(residual <= kLyapunovResidualTol * (A.norm() * X.norm() + W.norm()))) {
    fail(ErrorCode::numerical_failure,
         "Lyapunov solve residual too large: " + std::to_string(residual));
  }
  return X;
}

/// Symmetric eigendecomposition factor of M with eigenvalues below
/// clip_tol * max(lambda) discarded. Columns are ordered by descending
/// eigenvalue. Eigenvalues below -10 * clip_tol * max|lambda| mean M is
/// genuinely indefinite and are rejected.
inline GramianFactor spsd_sqrt_factor(const Matrix& M, double clip_tol = kDefaultClipTol) {
  detail::require_square(M, "semidefinite factor input");
  detail::require_finite(M, "semidefinite factor input");
  detail::require_symmetric(M, "semidefinite factor input", 1e-8);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrized(M));
  if (eig.info() != Eigen::Success) {
    fail(ErrorCode::numerical_failure, "symmetric eigensolver did not converge");
  }
  const Vector& lambda = eig.eigenvalues();  // ascending
  const Eigen::Index n = lambda.size();
  const double max_abs = lambda.cwiseAbs().maxCoeff();
  if (lambda(0) < -10.0 * clip_tol * max_abs) {
    fail(ErrorCode::indefinite_input,
         "matrix is indefinite (min eigenvalue " + std::to_string(lambda(0)) + ")");
  }
  const double cutoff = clip_tol * lambda(n - 1);
  int kept = 0;
  for (Eigen::Index i = n - 1; i >= 0 && lambda(i) > cutoff && lambda(i) > 0.0; --i) ++kept;

  GramianFactor out;
  out.clip_tol = clip_tol;
  out.rank = kept;
  out.factor.resize(n, kept);
  for (int c = 0; c < kept; ++c) {
    const Eigen::Index i = n - 1 - c;
    out.factor.col(c) = eig.eigenvectors().col(i) * std::sqrt(lambda(i));
  }
  return out;
}

/// Factor R of the solution of A (R R^T) + (R R^T) A^T + F F^T = 0.
///
/// Implemented as a full Bartels-Stewart solve on F F^T followed by
/// spsd_sqrt_factor, rather than Hammarling's direct recursion. The product
/// R R^T is what callers rely on.
inline GramianFactor solve_lyapunov_factored(const Matrix& A, const Matrix& F,
                                             double clip_tol = kDefaultClipTol) {
  detail::require_finite(F, "Lyapunov input factor");
  if (F.rows() != A.rows()) {
    fail(ErrorCode::dimension_mismatch, "Lyapunov input factor has wrong row count");
  }
  const Matrix W = F * F.transpose();
  return spsd_sqrt_factor(solve_lyapunov(A, detail::symmetrized(W)), clip_tol);
}

/// Generalized eigenpairs of (Q, P^{-1}) with P = R R^T, from the symmetric
/// eigendecomposition of R^T Q R and the map u -> R u.
///
/// Equal eigenvalues keep the order of Eigen's ascending solver, reversed.
/// has_ties is set when neighbours agree within kTieTol relative to the
/// largest value.
inline GeneralizedEigenpairs sym_def_geig(const Matrix& Q, const GramianFactor& P_factor) {
  const Matrix& R = P_factor.factor;
  detail::require_square(Q, "pencil matrix");
  if (R.rows() != Q.rows() || R.cols() != R.rows()) {
    fail(ErrorCode::rank_deficient,
         "pencil factor must be square and full rank (rank " +
             std::to_string(R.cols()) + " of " + std::to_string(Q.rows()) + ")");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(R);
  qr.setThreshold(1e-13);
  if (qr.rank() < R.cols()) {
    fail(ErrorCode::rank_deficient, "pencil factor is numerically rank deficient");
  }
  detail::require_symmetric(Q, "pencil matrix", 1e-8);

  const Matrix M = detail::symmetrized(R.transpose() * Q * R);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
  if (eig.info() != Eigen::Success) {
    fail(ErrorCode::numerical_failure, "symmetric eigensolver did not converge");
  }
  const Eigen::Index n = M.rows();
  GeneralizedEigenpairs out;
  out.values.resize(n);
  Matrix U(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    out.values(c) = std::max(eig.eigenvalues()(n - 1 - c), 0.0);
    U.col(c) = eig.eigenvectors().col(n - 1 - c);
  }
  out.vectors = R * U;
  const double top = out.values(0);
  for (Eigen::Index c = 0; c + 1 < n; ++c) {
    if (top > 0.0 && out.values(c) - out.values(c + 1) <= kTieTol * top &&
        out.values(c) > kTieTol * top) {
      out.has_ties = true;
    }
  }
  return out;
}

/// Spectral split M = M_minus + P P^T where P P^T carries the strictly
/// positive eigenvalues and M_minus the nonpositive ones.
struct NsdSplit {
  Matrix negative_part;
  Matrix positive_factor;  // d x (number of positive eigenvalues)
};

inline NsdSplit nearest_nsd_split(const Matrix& M) {
  detail::require_square(M, "split input");
  detail::require_finite(M, "split input");
  detail::require_symmetric(M, "split input", 1e-10);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrized(M));
  if (eig.info() != Eigen::Success) {
    fail(ErrorCode::numerical_failure, "symmetric eigensolver did not converge");
  }
  const Vector& lambda = eig.eigenvalues();
  const Matrix& V = eig.eigenvectors();
  const Eigen::Index n = lambda.size();
  Eigen::Index first_pos = n;
  while (first_pos > 0 && lambda(first_pos - 1) > 0.0) --first_pos;
  const Eigen::Index npos = n - first_pos;

  NsdSplit out;
  out.positive_factor.resize(n, npos);
  for (Eigen::Index c = 0; c < npos; ++c) {
    const Eigen::Index i = n - 1 - c;
    out.positive_factor.col(c) = V.col(i) * std::sqrt(lambda(i));
  }
  const Matrix Vneg = V.leftCols(first_pos);
  out.negative_part = detail::symmetrized(
      Vneg * lambda.head(first_pos).asDiagonal() * Vneg.transpose());
  return out;
}

}  // namespace btinf

#endif  // BTINF_LINALG_HPP
