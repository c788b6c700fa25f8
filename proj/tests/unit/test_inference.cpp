#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "btinf/inference.hpp"
#include "oracles.hpp"

using namespace btinf;

namespace {

LtiSystem scalar(double a, double c, double gamma) {
  return LtiSystem(Matrix::Constant(1, 1, a), std::nullopt, Matrix::Constant(1, 1, c), Matrix::Constant(1, 1, gamma));
}

LtiSystem random_system(CounterRng& rng, int d, int k) {
  return LtiSystem(oracle::random_stable(rng, d), Matrix::Identity(d, d), rng.normal_matrix(k, d),
                   oracle::random_spd(rng, k));
}

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "btinf_test_inference";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Schedule, Equispaced) {
  const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, 0.1, 3, 0});
  ASSERT_EQ(s.times.size(), 3u);
  EXPECT_DOUBLE_EQ(s.times[0], 0.1);
  EXPECT_DOUBLE_EQ(s.times[1], 0.2);
  EXPECT_DOUBLE_EQ(s.times[2], 0.30000000000000004);
}

TEST(Schedule, UniformSubinterval) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ObservationSchedule s = sample_schedule({ScheduleKind::uniform_subinterval, 1.0, 2, seed});
    EXPECT_GT(s.times[0], 0.0);
    EXPECT_LT(s.times[0], 1.0);
    EXPECT_GT(s.times[1], 1.0);
    EXPECT_LT(s.times[1], 2.0);
  }
}

TEST(Schedule, PoissonMeanGap) {
  const long n = 10000;
  const ObservationSchedule s = sample_schedule({ScheduleKind::poisson, 1.0, n, 42});
  double sum = 0.0, sq = 0.0, prev = 0.0;
  for (double t : s.times) {
    const double g = t - prev;
    sum += g;
    sq += g * g;
    prev = t;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - 1.0), 3.0 * se);
}

TEST(Schedule, DeterministicAndValidated) {
  const ScheduleSpec spec{ScheduleKind::poisson, 0.5, 100, 9};
  EXPECT_EQ(sample_schedule(spec).times, sample_schedule(spec).times);
  EXPECT_THROW(sample_schedule({ScheduleKind::equispaced, 0.0, 3, 0}), Error);
  EXPECT_THROW(sample_schedule({ScheduleKind::equispaced, 0.1, 0, 0}), Error);
}

TEST(Measurements, ZeroNoise) {
  const MeasurementSet ms = simulate_measurements(scalar(-1, 1, 1), explicit_schedule({1.0}), Vector::Ones(1), 5, true);
  EXPECT_NEAR(ms.values(0, 0), std::exp(-1.0), 1e-15);

  CounterRng rng(41);
  const LtiSystem sys = random_system(rng, 6, 2);
  const Vector x0 = rng.normal_vector(6);
  const ObservationSchedule s = explicit_schedule({0.2, 0.5, 1.3});
  const MeasurementSet m = simulate_measurements(sys, s, x0, 0, true);
  for (int i = 0; i < 3; ++i) {
    const Vector want = sys.C() * mat_exp(sys.A(), s.times[static_cast<std::size_t>(i)]) * x0;
    EXPECT_LE((m.values.col(i) - want).norm(), 1e-12 * want.norm());
  }
}

TEST(Measurements, PureNoiseCovariance) {
  CounterRng rng(42);
  const LtiSystem sys = random_system(rng, 3, 2);
  const long n = 20000;
  const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, 0.01, n, 0});
  const MeasurementSet m = simulate_measurements(sys, s, Vector::Zero(3), 77);
  const Matrix emp = m.values * m.values.transpose() / static_cast<double>(n);
  const Matrix& G = sys.noise_cov();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((G(i, i) * G(j, j) + G(i, j) * G(i, j)) / n);
      EXPECT_LE(std::abs(emp(i, j) - G(i, j)), 4.0 * se);
    }
}

TEST(Fisher, Scalar) {
  EXPECT_NEAR(fisher_information(scalar(-1, 1, 1), explicit_schedule({1.0}))(0, 0), std::exp(-2.0), 1e-15);
  const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, 1.0, 2, 0});
  EXPECT_NEAR(fisher_information(scalar(-1, 1, 1), s)(0, 0), std::exp(-2.0) + std::exp(-4.0), 1e-15);
  EXPECT_NEAR(fisher_information(scalar(-1, 1, 1), s, FisherMode::doubling)(0, 0), std::exp(-2.0) + std::exp(-4.0),
              1e-15);
}

TEST(Fisher, DoublingMatchesDirectSum) {
  CounterRng rng(43);
  const LtiSystem sys = random_system(rng, 10, 2);
  const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, 0.01, 1000, 0});
  const Matrix doubling = fisher_information(sys, s, FisherMode::doubling);
  const Matrix oracle_H = oracle::direct_fisher(sys.A(), sys.C(), sys.noise_cov(), s.times);
  EXPECT_LT(oracle::rel(doubling, oracle_H), 1e-9);
  EXPECT_LT(oracle::rel(fisher_information(sys, s, FisherMode::direct), oracle_H), 1e-9);
  for (long n : {1L, 2L, 3L, 7L, 8L, 13L, 64L, 999L}) {
    const ObservationSchedule sn = sample_schedule({ScheduleKind::equispaced, 0.05, n, 0});
    EXPECT_LT(oracle::rel(fisher_information(sys, sn, FisherMode::doubling),
                          oracle::direct_fisher(sys.A(), sys.C(), sys.noise_cov(), sn.times)),
              1e-10)
        << n;
  }
}

TEST(Fisher, GeneralTimesAndMonotone) {
  CounterRng rng(44);
  const LtiSystem sys = random_system(rng, 8, 1);
  const ObservationSchedule s = sample_schedule({ScheduleKind::poisson, 0.3, 40, 3});
  const Matrix H = fisher_information(sys, s);
  EXPECT_LT(oracle::rel(H, oracle::direct_fisher(sys.A(), sys.C(), sys.noise_cov(), s.times)), 1e-10);
  std::vector<double> more = s.times;
  more.push_back(s.times.back() + 0.1);
  const Matrix H2 = fisher_information(sys, explicit_schedule(more));
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(H2 - H).eigenvalues().minCoeff(), -1e-10 * H.norm());
  EXPECT_THROW(fisher_information(sys, s, FisherMode::doubling), Error);
  EXPECT_THROW(fisher_information(sys, ObservationSchedule{}), Error);
}

TEST(Fisher, ContinuumLimitDecreases) {
  CounterRng rng(45);
  const LtiSystem sys = random_system(rng, 4, 1);
  const Matrix Q = noisy_observability_gramian(sys);
  double prev = 1e300;
  for (long n : {100L, 1000L, 10000L}) {
    const double h = std::sqrt(static_cast<double>(n)) / (n - 1);
    const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, h, n - 1, 0});
    const Matrix W = sys.whitened_C().transpose() * sys.whitened_C();
    const double r = oracle::rel(h * (W + fisher_information(sys, s)), Q);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Adjoint, MatchesDirect) {
  CounterRng rng(46);
  const LtiSystem sys = random_system(rng, 7, 2);
  for (const ScheduleKind kind : {ScheduleKind::equispaced, ScheduleKind::poisson}) {
    const ObservationSchedule s = sample_schedule({kind, 0.2, 25, 4});
    const MeasurementSet ms = simulate_measurements(sys, s, rng.normal_vector(7), 8);
    const Vector g = data_adjoint(sys, ms);
    const Vector want = oracle::direct_adjoint(sys.A(), sys.C(), sys.noise_cov(), s.times, ms.values);
    EXPECT_LE((g - want).norm(), 1e-10 * want.norm());
  }
}

TEST(Posterior, Trivial) {
  const CompatiblePrior prior = assert_prior(-Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  const Posterior none = posterior_from_information(prior, Matrix::Zero(1, 1), Vector::Zero(1), "full");
  EXPECT_NEAR(none.cov(0, 0), 1.0, 1e-15);
  EXPECT_EQ(none.mean(0), 0.0);
  const Posterior p = posterior_from_information(prior, Matrix::Ones(1, 1), Vector::Ones(1), "full");
  EXPECT_NEAR(p.cov(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p.mean(0), 0.5, 1e-15);
}

TEST(Posterior, MatchesNaiveFormula) {
  CounterRng rng(47);
  const int d = 8;
  const LtiSystem sys = random_system(rng, d, 2);
  const CompatiblePrior prior = spin_up_prior(sys.A(), *sys.B());
  const ObservationSchedule s = sample_schedule({ScheduleKind::equispaced, 0.1, 20, 0});
  const MeasurementSet ms = simulate_measurements(sys, s, rng.normal_vector(d), 3);
  const Posterior post = full_posterior(prior, sys, ms);
  const Matrix H = oracle::direct_fisher(sys.A(), sys.C(), sys.noise_cov(), s.times);
  const Matrix naive = oracle::naive_posterior_cov(H, prior.cov);
  EXPECT_LT(oracle::rel(post.cov, naive), 1e-8);
  const Vector mean = naive * oracle::direct_adjoint(sys.A(), sys.C(), sys.noise_cov(), s.times, ms.values);
  EXPECT_LE((post.mean - mean).norm(), 1e-8 * mean.norm());
  // Posterior contracts the prior.
  EXPECT_LE(Eigen::SelfAdjointEigenSolver<Matrix>(post.cov - prior.cov).eigenvalues().maxCoeff(),
            1e-10 * prior.cov.norm());
}

TEST(MeasurementFile, RoundTrip) {
  CounterRng rng(48);
  const LtiSystem sys = random_system(rng, 4, 3);
  const ObservationSchedule s = sample_schedule({ScheduleKind::poisson, 0.3, 12, 11});
  const MeasurementSet ms = simulate_measurements(sys, s, rng.normal_vector(4), 13);
  const std::string path = tmp_path("m.csv");
  write_measurements(path, ms);
  const MeasurementSet back = read_measurements(path);
  EXPECT_EQ(back.schedule.times, ms.schedule.times);
  EXPECT_EQ((back.values - ms.values).norm(), 0.0);
  EXPECT_EQ(back.schedule.kind, ScheduleKind::poisson);
  EXPECT_EQ(back.schedule.seed, 11u);
  EXPECT_EQ(back.seed, 13u);
}

TEST(MeasurementFile, EmptyIsError) {
  const std::string path = tmp_path("empty.csv");
  std::ofstream(path) << "time,y_1\n";
  try {
    read_measurements(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_measurements);
  }
  std::ofstream(path) << "";
  EXPECT_THROW(read_measurements(path), Error);
}
