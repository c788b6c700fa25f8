#ifndef BTINF_LTI_HPP
#define BTINF_LTI_HPP

#include <optional>
#include <string>
#include <vector>

#include "btinf/linalg.hpp"

namespace btinf {

/// dx/dt = A x + B u, m_i = C x(t_i) + eps_i with eps_i ~ N(0, noise_cov).
/// Stability is checked on demand, not at construction.
class LtiSystem {
 public:
  LtiSystem(Matrix A, std::optional<Matrix> B, Matrix C, Matrix noise_cov)
      : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), noise_cov_(std::move(noise_cov)) {
    detail::require_square(A_, "A");
    detail::require_finite(A_, "A");
    detail::require_finite(C_, "C");
    detail::require_finite(noise_cov_, "noise covariance");
    if (C_.cols() != A_.rows() || C_.rows() == 0) {
      fail(ErrorCode::dimension_mismatch, "C must be k x d with d = " + std::to_string(A_.rows()));
    }
    if (noise_cov_.rows() != C_.rows() || noise_cov_.cols() != C_.rows()) {
      fail(ErrorCode::dimension_mismatch, "noise covariance must be k x k");
    }
    if (B_) {
      detail::require_finite(*B_, "B");
      if (B_->rows() != A_.rows()) fail(ErrorCode::dimension_mismatch, "B must have d rows");
    }
    detail::require_symmetric(noise_cov_, "noise covariance", 1e-12);
    noise_chol_.compute(detail::symmetrized(noise_cov_));
    if (noise_chol_.info() != Eigen::Success) {
      fail(ErrorCode::indefinite_input, "noise covariance is not positive definite");
    }
    // Whitened output map L^{-1} C with noise_cov = L L^T.
    Cw_ = noise_chol_.matrixL().solve(C_);
  }

  const Matrix& A() const { return A_; }
  const std::optional<Matrix>& B() const { return B_; }
  const Matrix& C() const { return C_; }
  const Matrix& noise_cov() const { return noise_cov_; }
  const Matrix& whitened_C() const { return Cw_; }
  int dim() const { return static_cast<int>(A_.rows()); }
  int outputs() const { return static_cast<int>(C_.rows()); }

  /// noise_cov^{-1} v via the Cholesky factor.
  Vector noise_solve(const Vector& v) const { return noise_chol_.solve(v); }
  /// L^{-1} v, i.e. whitening of one output sample.
  Vector whiten(const Vector& v) const { return noise_chol_.matrixL().solve(v); }
  Matrix noise_factor() const { return noise_chol_.matrixL(); }

 private:
  Matrix A_;
  std::optional<Matrix> B_;
  Matrix C_;
  Matrix noise_cov_;
  Eigen::LLT<Matrix> noise_chol_;
  Matrix Cw_;
};

inline Matrix reachability_gramian(const LtiSystem& sys) {
  if (!sys.B()) fail(ErrorCode::invalid_argument, "reachability Gramian needs an input port B");
  const Matrix& B = *sys.B();
  return solve_lyapunov(sys.A(), B * B.transpose());
}

/// Q_m solving A^T Q + Q A + C^T noise_cov^{-1} C = 0.
inline Matrix noisy_observability_gramian(const LtiSystem& sys) {
  const Matrix& Cw = sys.whitened_C();
  return solve_lyapunov(sys.A().transpose(), Cw.transpose() * Cw);
}

/// Integral of e^{A^T t} C^T noise_cov^{-1} C e^{A t} over [t_start, t_end].
inline Matrix time_limited_fisher_gramian(const LtiSystem& sys, double t_start, double t_end) {
  if (!(t_start >= 0.0) || !std::isfinite(t_end) || !(t_end > t_start)) {
    fail(ErrorCode::invalid_argument, "time-limited Gramian needs 0 <= t_start < t_end");
  }
  const Matrix Qm = noisy_observability_gramian(sys);
  const Matrix Ps = mat_exp(sys.A(), t_start);
  const Matrix Pe = mat_exp(sys.A(), t_end);
  return detail::symmetrized(Ps.transpose() * Qm * Ps - Pe.transpose() * Qm * Pe);
}

struct ForwardMap {
  std::vector<Matrix> blocks;  // C e^{A t_i}
  std::vector<double> times;
};

namespace detail {

inline void require_increasing_times(const std::vector<double>& times) {
  if (times.empty()) fail(ErrorCode::empty_schedule, "observation schedule is empty");
  double prev = 0.0;
  for (double t : times) {
    if (!std::isfinite(t) || !(t > prev)) {
      fail(ErrorCode::invalid_argument, "observation times must be positive and strictly increasing");
    }
    prev = t;
  }
}

// True when t_i = i * h within 1e-12 relative for every i.
inline bool equispaced_from_zero(const std::vector<double>& times, double* h_out = nullptr) {
  if (times.empty()) return false;
  const double h = times.front();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double expect = h * static_cast<double>(i + 1);
    if (std::abs(times[i] - expect) > 1e-12 * expect) return false;
  }
  if (h_out) *h_out = h;
  return true;
}

}  // namespace detail

inline ForwardMap build_forward_map(const LtiSystem& sys, const std::vector<double>& times) {
  detail::require_increasing_times(times);
  ForwardMap out;
  out.times = times;
  out.blocks.reserve(times.size());
  double h = 0.0;
  if (detail::equispaced_from_zero(times, &h)) {
    const Matrix E = mat_exp(sys.A(), h);
    Matrix row = sys.C() * E;
    for (std::size_t i = 0; i < times.size(); ++i) {
      out.blocks.push_back(row);
      row = row * E;
    }
    return out;
  }
  double prev = 0.0;
  Matrix row = sys.C();
  for (double t : times) {
    row = row * mat_exp(sys.A(), t - prev);
    out.blocks.push_back(row);
    prev = t;
  }
  return out;
}

}  // namespace btinf

#endif  // BTINF_LTI_HPP
