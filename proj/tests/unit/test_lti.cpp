#include <cmath>

#include <gtest/gtest.h>

#include "btinf/lti.hpp"
#include "oracles.hpp"

using namespace btinf;

namespace {

LtiSystem scalar(double a, double c, double gamma, std::optional<double> b = std::nullopt) {
  std::optional<Matrix> B;
  if (b) B = Matrix::Constant(1, 1, *b);
  return LtiSystem(Matrix::Constant(1, 1, a), B, Matrix::Constant(1, 1, c), Matrix::Constant(1, 1, gamma));
}

LtiSystem random_system(CounterRng& rng, int d, int k, int m) {
  Matrix A = oracle::random_stable(rng, d);
  Matrix noise = oracle::random_spd(rng, k);
  return LtiSystem(A, rng.normal_matrix(d, m), rng.normal_matrix(k, d), noise);
}

}  // namespace

TEST(Lti, Validation) {
  EXPECT_THROW(LtiSystem(Matrix::Identity(2, 2), std::nullopt, Matrix::Zero(1, 3), Matrix::Identity(1, 1)), Error);
  EXPECT_THROW(LtiSystem(Matrix::Identity(2, 2), std::nullopt, Matrix::Zero(1, 2), Matrix::Identity(2, 2)), Error);
  EXPECT_THROW(LtiSystem(Matrix::Identity(2, 2), std::nullopt, Matrix::Zero(1, 2), -Matrix::Identity(1, 1)), Error);
}

TEST(Lti, AbscissaOfTriangular) {
  Matrix A(2, 2);
  A << -1, 3, 0, -2;
  EXPECT_NEAR(spectral_abscissa(A), -1.0, 1e-14);
}

TEST(Gramians, Trivial) {
  const LtiSystem eye(-Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  EXPECT_LT((reachability_gramian(eye) - 0.5 * Matrix::Identity(2, 2)).norm(), 1e-15);
  EXPECT_NEAR(reachability_gramian(scalar(-1, 1, 1, std::sqrt(2.0)))(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(noisy_observability_gramian(scalar(-1, 1, 1))(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(noisy_observability_gramian(scalar(-1, 1, 4))(0, 0), 0.125, 1e-15);
}

TEST(Gramians, MissingB) {
  EXPECT_THROW(reachability_gramian(scalar(-1, 1, 1)), Error);
}

TEST(Gramians, MatchQuadrature) {
  CounterRng rng(21);
  const LtiSystem sys = random_system(rng, 30, 2, 3);
  const double T = 40.0 / std::abs(spectral_abscissa(sys.A()));
  const Matrix& B = *sys.B();
  const Matrix P = reachability_gramian(sys);
  const Matrix Pq = oracle::simpson_gramian(sys.A(), B * B.transpose(), T, 8000);
  EXPECT_LT(oracle::rel(P, Pq), 1e-6);

  const Matrix W = sys.C().transpose() * sys.noise_cov().inverse() * sys.C();
  const Matrix Q = noisy_observability_gramian(sys);
  const Matrix Qq = oracle::simpson_gramian(sys.A().transpose(), W, T, 8000);
  EXPECT_LT(oracle::rel(Q, Qq), 1e-6);

  for (const Matrix* G : {&P, &Q}) {
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(*G).eigenvalues();
    EXPECT_GE(ev(0), -1e-10 * ev(ev.size() - 1));
  }
  EXPECT_LE(lyapunov_residual(sys.A(), P, B * B.transpose()), 1e-10 * (B * B.transpose()).norm());
  EXPECT_LE(lyapunov_residual(sys.A().transpose(), Q, W), 1e-10 * W.norm());
}

TEST(TimeLimited, ScalarAndLimit) {
  const LtiSystem s = scalar(-1, 1, 1);
  EXPECT_NEAR(time_limited_fisher_gramian(s, 0.0, 1.0)(0, 0), (1 - std::exp(-2.0)) / 2, 1e-14);
  EXPECT_THROW(time_limited_fisher_gramian(s, 1.0, 1.0), Error);

  CounterRng rng(22);
  const LtiSystem sys = random_system(rng, 10, 2, 1);
  const double T = 60.0 / std::abs(spectral_abscissa(sys.A()));
  const Matrix Q = noisy_observability_gramian(sys);
  EXPECT_LT(oracle::rel(time_limited_fisher_gramian(sys, 0.0, T), Q), 1e-6);
}

TEST(TimeLimited, ModifiedLyapunovAndMonotone) {
  CounterRng rng(23);
  const LtiSystem sys = random_system(rng, 8, 1, 1);
  const double ts = 0.3, te = 2.0;
  const Matrix G = time_limited_fisher_gramian(sys, ts, te);
  // A^T G + G A + Phi(ts)^T W Phi(ts) - Phi(te)^T W Phi(te) = 0
  const Matrix W = sys.whitened_C().transpose() * sys.whitened_C();
  const Matrix Ps = mat_exp(sys.A(), ts), Pe = mat_exp(sys.A(), te);
  const Matrix rhs = Ps.transpose() * W * Ps - Pe.transpose() * W * Pe;
  EXPECT_LE(lyapunov_residual(sys.A().transpose(), G, rhs), 1e-10 * rhs.norm());

  const Matrix G1 = time_limited_fisher_gramian(sys, 0.0, 1.0);
  const Matrix G2 = time_limited_fisher_gramian(sys, 0.0, 3.0);
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(G2 - G1).eigenvalues();
  EXPECT_GE(ev(0), -1e-10 * G2.norm());
}

TEST(ForwardMap, ScalarAndDirect) {
  const ForwardMap f = build_forward_map(scalar(-1, 1, 1), {1.0, 2.0});
  ASSERT_EQ(f.blocks.size(), 2u);
  EXPECT_NEAR(f.blocks[0](0, 0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(f.blocks[1](0, 0), std::exp(-2.0), 1e-15);

  CounterRng rng(24);
  const LtiSystem sys = random_system(rng, 10, 2, 1);
  const std::vector<double> times = {0.1, 0.35, 0.4, 1.2, 2.5};
  const ForwardMap g = build_forward_map(sys, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Matrix want = sys.C() * mat_exp(sys.A(), times[i]);
    EXPECT_LE((g.blocks[i] - want).norm(), 1e-10 * std::max(1.0, want.norm()));
  }

  std::vector<double> equi;
  for (int i = 1; i <= 100; ++i) equi.push_back(0.05 * i);
  const ForwardMap e = build_forward_map(sys, equi);
  for (std::size_t i = 0; i < equi.size(); i += 9) {
    const Matrix want = sys.C() * mat_exp(sys.A(), equi[i]);
    EXPECT_LE((e.blocks[i] - want).norm(), 1e-9 * want.norm());
  }
}

TEST(ForwardMap, RejectsBadTimes) {
  EXPECT_THROW(build_forward_map(scalar(-1, 1, 1), {1.0, 0.5}), Error);
  EXPECT_THROW(build_forward_map(scalar(-1, 1, 1), {0.0, 0.5}), Error);
}
