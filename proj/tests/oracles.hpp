#ifndef BTINF_TEST_ORACLES_HPP
#define BTINF_TEST_ORACLES_HPP

// Independent reference computations for the tests. Slow and simple on
// purpose; none of this is used by the library.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "btinf/linalg.hpp"
#include "btinf/random.hpp"

namespace oracle {

using btinf::Matrix;
using btinf::Vector;

/// vec(A X + X A^T) = (I kron A + A kron I) vec(X), solved densely.
inline Matrix kronecker_lyapunov(const Matrix& A, const Matrix& W) {
  const Eigen::Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  Matrix K(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) = I(i, j) * A + A(i, j) * I;
  const Vector rhs = -Eigen::Map<const Vector>(W.data(), n * n);
  const Vector x = K.fullPivLu().solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), n, n);
}

/// Truncated Taylor series with scaling and squaring in long double; used
/// only to cross-check the Pade exponential.
inline Matrix taylor_exp(const Matrix& A, double t) {
  using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  LMat X = (A * t).cast<long double>();
  const long double nrm = X.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  while (nrm / std::ldexp(1.0L, s) > 0.5L) ++s;
  X /= std::ldexp(1.0L, s);
  const Eigen::Index n = A.rows();
  LMat term = LMat::Identity(n, n), sum = LMat::Identity(n, n);
  for (int k = 1; k < 40; ++k) {
    term = term * X / static_cast<long double>(k);
    sum += term;
  }
  for (int k = 0; k < s; ++k) sum = sum * sum;
  return sum.cast<double>();
}

/// Composite Simpson on [0, T] of e^{A t} W e^{A^T t}, with e^{A h}
/// propagated from a single step exponential.
inline Matrix simpson_gramian(const Matrix& A, const Matrix& W, double T, long intervals) {
  if (intervals % 2) ++intervals;
  const double h = T / static_cast<double>(intervals);
  const Matrix E = btinf::mat_exp(A, h);
  const Eigen::Index n = A.rows();
  Matrix Phi = Matrix::Identity(n, n);
  Matrix acc = Matrix::Zero(n, n);
  for (long i = 0; i <= intervals; ++i) {
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * Phi * W * Phi.transpose();
    Phi = E * Phi;
  }
  return acc * h / 3.0;
}

/// Stable A = -(shift I + G G^T / d) + skew part, spectrum in the left half plane.
inline Matrix random_stable(btinf::CounterRng& rng, int d, double shift = 0.5) {
  const Matrix G = rng.normal_matrix(d, d);
  const Matrix K = rng.normal_matrix(d, d);
  return -(shift * Matrix::Identity(d, d) + G * G.transpose() / d) + 0.5 * (K - K.transpose());
}

inline Matrix random_spd(btinf::CounterRng& rng, int d, double shift = 0.5) {
  const Matrix G = rng.normal_matrix(d, d);
  return G * G.transpose() / d + shift * Matrix::Identity(d, d);
}

inline Matrix random_orthogonal(btinf::CounterRng& rng, int d) {
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(d, d));
  return qr.householderQ() * Matrix::Identity(d, d);
}

/// sum_i e^{A^T t_i} C^T Ginv C e^{A t_i} with a fresh exponential per time.
inline Matrix direct_fisher(const Matrix& A, const Matrix& C, const Matrix& noise_cov,
                            const std::vector<double>& times) {
  const Matrix Ginv = noise_cov.inverse();
  Matrix H = Matrix::Zero(A.rows(), A.cols());
  for (double t : times) {
    const Matrix P = btinf::mat_exp(A, t);
    H += P.transpose() * C.transpose() * Ginv * C * P;
  }
  return H;
}

inline Vector direct_adjoint(const Matrix& A, const Matrix& C, const Matrix& noise_cov,
                             const std::vector<double>& times, const Matrix& values) {
  const Matrix Ginv = noise_cov.inverse();
  Vector g = Vector::Zero(A.rows());
  for (std::size_t i = 0; i < times.size(); ++i) {
    g += btinf::mat_exp(A, times[i]).transpose() * C.transpose() * Ginv * values.col(static_cast<Eigen::Index>(i));
  }
  return g;
}

/// (H + Gamma_pr^{-1})^{-1} with explicit inverses.
inline Matrix naive_posterior_cov(const Matrix& H, const Matrix& prior) {
  return (H + prior.inverse()).inverse();
}

inline double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle

#endif  // BTINF_TEST_ORACLES_HPP
