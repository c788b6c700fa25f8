#include <cmath>

#include <gtest/gtest.h>

#include "btinf/optimal.hpp"
#include "oracles.hpp"

using namespace btinf;

namespace {

struct Case {
  LtiSystem sys;
  CompatiblePrior prior;
  ObservationSchedule schedule;
  Matrix H;
};

Case random_case(CounterRng& rng, int d) {
  const Matrix A = oracle::random_stable(rng, d);
  const Matrix B = rng.normal_matrix(d, d);
  LtiSystem sys(A, B, rng.normal_matrix(2, d), oracle::random_spd(rng, 2));
  const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, 0.1, 40, 0});
  const Matrix H = fisher_information(sys, s);
  return {sys, spin_up_prior(A, B), s, H};
}

CompatiblePrior scalar_prior(double g) { return assert_prior(-Matrix::Identity(1, 1), Matrix::Constant(1, 1, g)); }

}  // namespace

TEST(Pencil, Trivial) {
  CounterRng rng(71);
  const Case c = random_case(rng, 5);
  const PencilDecomposition a = spantini_eigenpairs(c.prior.cov.inverse(), c.prior);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(a.tau_sq(i), 1.0, 1e-10);
  const PencilDecomposition z = spantini_eigenpairs(Matrix::Zero(5, 5), c.prior);
  EXPECT_EQ(z.tau_sq.norm(), 0.0);
  EXPECT_EQ(z.zero_count, 5);
}

TEST(Pencil, ResidualAndBiorthogonality) {
  CounterRng rng(72);
  const Case c = random_case(rng, 10);
  const PencilDecomposition p = spantini_eigenpairs(c.H, c.prior);
  const Matrix Pinv = c.prior.cov.inverse();
  EXPECT_LT((p.W_tilde.transpose() * p.W - Matrix::Identity(10, 10)).norm(), 1e-9);
  for (int i = 0; i < 10; ++i) {
    const Vector w = p.W.col(i);
    EXPECT_LE((c.H * w - p.tau_sq(i) * Pinv * w).norm(), 1e-8 * c.H.norm());
  }
}

TEST(Olru, Limits) {
  CounterRng rng(73);
  const Case c = random_case(rng, 8);
  const PencilDecomposition p = spantini_eigenpairs(c.H, c.prior);
  EXPECT_EQ((olru_covariance(c.prior, p, 0) - c.prior.cov).norm(), 0.0);
  const Matrix full = oracle::naive_posterior_cov(c.H, c.prior.cov);
  EXPECT_LT(oracle::rel(olru_covariance(c.prior, p, 8), full), 1e-8);
  EXPECT_NEAR(olru_optimal_distance(p, 8), 0.0, 0.0);

  const CompatiblePrior one = scalar_prior(1.0);
  const PencilDecomposition q = spantini_eigenpairs(Matrix::Ones(1, 1), one);
  EXPECT_NEAR(olru_covariance(one, q, 1)(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(olru_optimal_distance(q, 0), std::pow(std::log(0.5), 2), 1e-15);
  EXPECT_NEAR(olru_optimal_distance(q, 0), 0.48045, 1e-5);
}

TEST(Olru, SpdForEveryRank) {
  CounterRng rng(74);
  const Case c = random_case(rng, 10);
  const PencilDecomposition p = spantini_eigenpairs(1e6 * c.H, c.prior);
  for (int r = 0; r <= 10; ++r) {
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(olru_covariance(c.prior, p, r)).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Forstner, Basics) {
  CounterRng rng(75);
  const Matrix X = oracle::random_spd(rng, 4);
  EXPECT_NEAR(forstner_distance(X, X), 0.0, 1e-24);
  Matrix D = Matrix::Identity(2, 2);
  D(0, 0) = std::exp(2.0);
  EXPECT_NEAR(forstner_distance(D, Matrix::Identity(2, 2)), 4.0, 1e-14);
  EXPECT_THROW(forstner_distance(-X, X), Error);
  EXPECT_THROW(forstner_distance(X, -X), Error);
}

TEST(Forstner, InverseSymmetryAndSimilarity) {
  CounterRng rng(76);
  const Matrix A = oracle::random_spd(rng, 10), B = oracle::random_spd(rng, 10);
  const double dAB = forstner_distance(A, B);
  EXPECT_NEAR(forstner_distance(A.inverse(), B.inverse()), dAB, 1e-8 * std::max(1.0, dAB));
  EXPECT_NEAR(forstner_distance(B, A), dAB, 1e-8 * std::max(1.0, dAB));
  const Matrix S = rng.normal_matrix(10, 10) + 3.0 * Matrix::Identity(10, 10);
  EXPECT_NEAR(forstner_distance(S * A * S.transpose(), S * B * S.transpose()), dAB, 1e-8 * std::max(1.0, dAB));
}

TEST(Olru, ClosedFormMatchesDirect) {
  CounterRng rng(77);
  const Case c = random_case(rng, 10);
  const PencilDecomposition p = spantini_eigenpairs(c.H, c.prior);
  const Matrix post = oracle::naive_posterior_cov(c.H, c.prior.cov);
  for (int r = 0; r <= 10; ++r) {
    EXPECT_NEAR(forstner_distance(post, olru_covariance(c.prior, p, r)), olru_optimal_distance(p, r), 1e-7) << r;
  }
}

TEST(Olru, OptimalAgainstRandomUpdates) {
  CounterRng rng(78);
  const int d = 10;
  const Case c = random_case(rng, d);
  const PencilDecomposition p = spantini_eigenpairs(c.H, c.prior);
  const Matrix post = oracle::naive_posterior_cov(c.H, c.prior.cov);
  int tested = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int r = 1 + trial % 5;
    Matrix K = rng.normal_matrix(d, r);
    // Shrink until Gamma_pr - K K^T is strictly positive definite.
    Matrix cand = c.prior.cov - K * K.transpose();
    while (Eigen::SelfAdjointEigenSolver<Matrix>(cand).eigenvalues().minCoeff() <= 1e-8 * c.prior.cov.norm()) {
      K *= 0.5;
      cand = c.prior.cov - K * K.transpose();
    }
    EXPECT_GE(forstner_distance(post, cand), olru_optimal_distance(p, r) - 1e-8);
    ++tested;
  }
  EXPECT_EQ(tested, 50);
}

TEST(Projected, LimitsAndIdentity) {
  CounterRng rng(79);
  const Case c = random_case(rng, 10);
  const PencilDecomposition p = spantini_eigenpairs(c.H, c.prior);
  EXPECT_LT(oracle::rel(projected_forward_quantities(p, c.H, 10).H_hat, c.H), 1e-9);
  EXPECT_EQ(projected_forward_quantities(p, c.H, 0).H_hat.norm(), 0.0);
  for (int r = 1; r < 10; ++r) {
    const Matrix Hhat = projected_forward_quantities(p, c.sys, c.schedule, r).H_hat;
    const Posterior sandwich = posterior_from_information(c.prior, Hhat, Vector::Zero(10), "OLR");
    EXPECT_LT(oracle::rel(sandwich.cov, olru_covariance(c.prior, p, r)), 1e-8) << r;
  }
}

TEST(Means, LimitsAndIdentities) {
  CounterRng rng(80);
  const int d = 10;
  const Case c = random_case(rng, d);
  const MeasurementSet ms = simulate_measurements(c.sys, c.schedule, rng.normal_vector(d), 5);
  const Posterior full = full_posterior(c.prior, c.sys, ms);
  const PencilDecomposition p = spantini_eigenpairs(c.H, c.prior);
  EXPECT_LE((olr_mean(c.prior, p, c.sys, ms, d) - full.mean).norm(), 1e-8 * full.mean.norm());
  EXPECT_LE((olru_mean(c.prior, p, c.sys, ms, d) - full.mean).norm(), 1e-8 * full.mean.norm());

  const Vector g = data_adjoint(c.sys, ms);
  EXPECT_LE((olru_mean(c.prior, p, g, 0) - c.prior.cov * g).norm(), 1e-12 * (c.prior.cov * g).norm());
  EXPECT_EQ(olr_mean(c.prior, p, Vector::Zero(d), 4).norm(), 0.0);

  const int r = 5;
  const Matrix cov = olru_covariance(c.prior, p, r);
  const Vector diff = olru_mean(c.prior, p, g, r) - olr_mean(c.prior, p, g, r);
  const Vector want = cov * (g - oblique_projector(p, r) * g);
  EXPECT_LE((diff - want).norm(), 1e-9 * std::max(1.0, want.norm()));

  const CompatiblePrior one = scalar_prior(1.0);
  const PencilDecomposition q = spantini_eigenpairs(Matrix::Ones(1, 1), one);
  EXPECT_NEAR(olr_mean(one, q, Vector::Ones(1), 1)(0), 0.5, 1e-15);
}
