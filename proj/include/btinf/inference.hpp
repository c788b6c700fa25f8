#ifndef BTINF_INFERENCE_HPP
#define BTINF_INFERENCE_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "btinf/lti.hpp"
#include "btinf/prior.hpp"
#include "btinf/random.hpp"

namespace btinf {

enum class ScheduleKind { explicit_times, equispaced, uniform_subinterval, poisson };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::explicit_times: return "explicit";
    case ScheduleKind::equispaced: return "equispaced";
    case ScheduleKind::uniform_subinterval: return "uniform_subinterval";
    case ScheduleKind::poisson: return "poisson";
  }
  return "unknown";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "explicit") return ScheduleKind::explicit_times;
  if (s == "equispaced") return ScheduleKind::equispaced;
  if (s == "uniform_subinterval") return ScheduleKind::uniform_subinterval;
  if (s == "poisson") return ScheduleKind::poisson;
  fail(ErrorCode::invalid_argument, "unknown schedule kind '" + s + "'");
}

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::equispaced;
  double h = 0.0;
  long n = 0;
  std::uint64_t seed = 0;
};

struct ObservationSchedule {
  ScheduleKind kind = ScheduleKind::explicit_times;
  std::vector<double> times;
  double h = 0.0;  // spacing, or mean spacing for random kinds
  long n = 0;
  std::uint64_t seed = 0;

  bool empty() const { return times.empty(); }
};

/// Materializes a schedule.
///   equispaced:          t_i = i h
///   uniform_subinterval: t_i uniform on ((i-1) h, i h)
///   poisson:             gaps i.i.d. exponential with mean h
inline ObservationSchedule sample_schedule(const ScheduleSpec& spec) {
  if (!(spec.h > 0.0) || !std::isfinite(spec.h)) fail(ErrorCode::invalid_argument, "schedule h must be > 0");
  if (spec.n < 1) fail(ErrorCode::invalid_argument, "schedule n must be >= 1");
  if (spec.kind == ScheduleKind::explicit_times) {
    fail(ErrorCode::invalid_argument, "explicit schedules are built from a time list");
  }
  ObservationSchedule s;
  s.kind = spec.kind;
  s.h = spec.h;
  s.n = spec.n;
  s.seed = spec.seed;
  s.times.resize(static_cast<std::size_t>(spec.n));
  CounterRng rng(spec.seed, 0x5c4edULL);
  double t = 0.0;
  for (long i = 0; i < spec.n; ++i) {
    const double di = static_cast<double>(i);
    switch (spec.kind) {
      case ScheduleKind::equispaced: t = (di + 1.0) * spec.h; break;
      case ScheduleKind::uniform_subinterval: t = (di + rng.uniform()) * spec.h; break;
      case ScheduleKind::poisson: t += rng.exponential(spec.h); break;
      default: break;
    }
    s.times[static_cast<std::size_t>(i)] = t;
  }
  detail::require_increasing_times(s.times);
  return s;
}

inline ObservationSchedule explicit_schedule(std::vector<double> times) {
  ObservationSchedule s;
  s.kind = ScheduleKind::explicit_times;
  s.n = static_cast<long>(times.size());
  s.times = std::move(times);
  if (!s.times.empty()) {
    detail::require_increasing_times(s.times);
    s.h = s.times.back() / static_cast<double>(s.times.size());
  }
  return s;
}

struct MeasurementSet {
  ObservationSchedule schedule;
  Matrix values;  // k x n, column i is m_i
  std::optional<Vector> truth;
  std::uint64_t seed = 0;
  bool zero_noise = false;

  long count() const { return static_cast<long>(values.cols()); }
};

namespace detail {

// Calls visit(i, Phi_i) with Phi_i = e^{A t_i}, propagating with one
// exponential for equispaced schedules and per-gap exponentials otherwise.
template <class Visit>
void for_each_propagator(const Matrix& A, const std::vector<double>& times, Visit&& visit) {
  const Eigen::Index d = A.rows();
  double h = 0.0;
  Matrix Phi = Matrix::Identity(d, d);
  if (equispaced_from_zero(times, &h)) {
    const Matrix E = mat_exp(A, h);
    for (std::size_t i = 0; i < times.size(); ++i) {
      Phi = E * Phi;
      visit(i, Phi);
    }
    return;
  }
  double prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    Phi = mat_exp(A, times[i] - prev) * Phi;
    prev = times[i];
    visit(i, Phi);
  }
}

}  // namespace detail

/// m_i = C e^{A t_i} x0 + eps_i, eps_i ~ N(0, noise_cov) from CounterRng(seed).
/// With zero_noise the noise term is omitted.
inline MeasurementSet simulate_measurements(const LtiSystem& sys, const ObservationSchedule& schedule,
                                            const Vector& x0, std::uint64_t seed, bool zero_noise = false) {
  if (x0.size() != sys.dim()) fail(ErrorCode::dimension_mismatch, "initial condition has wrong length");
  detail::require_increasing_times(schedule.times);
  MeasurementSet ms;
  ms.schedule = schedule;
  ms.truth = x0;
  ms.seed = seed;
  ms.zero_noise = zero_noise;
  const int k = sys.outputs();
  const std::size_t n = schedule.times.size();
  ms.values.resize(k, static_cast<Eigen::Index>(n));

  double h = 0.0;
  Vector x = x0;
  if (detail::equispaced_from_zero(schedule.times, &h)) {
    const Matrix E = mat_exp(sys.A(), h);
    for (std::size_t i = 0; i < n; ++i) {
      x = E * x;
      ms.values.col(static_cast<Eigen::Index>(i)) = sys.C() * x;
    }
  } else {
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x = mat_exp(sys.A(), schedule.times[i] - prev) * x;
      prev = schedule.times[i];
      ms.values.col(static_cast<Eigen::Index>(i)) = sys.C() * x;
    }
  }
  if (!zero_noise) {
    CounterRng rng(seed, 0x4015eULL);
    const Matrix L = sys.noise_factor();
    for (std::size_t i = 0; i < n; ++i) {
      ms.values.col(static_cast<Eigen::Index>(i)) += L * rng.normal_vector(k);
    }
  }
  return ms;
}

enum class FisherMode { direct, doubling, auto_select };

inline FisherMode parse_fisher_mode(const std::string& s) {
  if (s == "direct") return FisherMode::direct;
  if (s == "doubling") return FisherMode::doubling;
  if (s == "auto") return FisherMode::auto_select;
  fail(ErrorCode::invalid_argument, "unknown fisher_mode '" + s + "'");
}

/// sum_{i=1}^{n} (E^i)^T W E^i by binary doubling over the digits of n:
///   S_{2m}  = S_m + (E^m)^T S_m E^m
///   S_{m+1} = S_1 + E^T S_m E
inline Matrix doubling_sum(const Matrix& E, const Matrix& W, long n) {
  if (n < 1) fail(ErrorCode::empty_schedule, "doubling sum needs n >= 1");
  const Matrix S1 = detail::symmetrized(E.transpose() * W * E);
  Matrix S = S1;
  Matrix P = E;  // E^m for the current m
  int top = 0;
  while ((n >> (top + 1)) != 0) ++top;
  for (int bit = top - 1; bit >= 0; --bit) {
    S = detail::symmetrized(S + P.transpose() * S * P);
    P = P * P;
    if ((n >> bit) & 1L) {
      S = detail::symmetrized(S1 + E.transpose() * S * E);
      P = P * E;
    }
  }
  return S;
}

/// Fisher information sum_i e^{A^T t_i} C^T noise_cov^{-1} C e^{A t_i}.
///
/// auto uses the doubling recursion when the times are t_i = i h and
/// n > 1000, and direct propagation otherwise.
inline Matrix fisher_information(const LtiSystem& sys, const ObservationSchedule& schedule,
                                 FisherMode mode = FisherMode::auto_select) {
  detail::require_increasing_times(schedule.times);
  double h = 0.0;
  const bool equi = detail::equispaced_from_zero(schedule.times, &h);
  const long n = static_cast<long>(schedule.times.size());
  if (mode == FisherMode::auto_select) mode = (equi && n > 1000) ? FisherMode::doubling : FisherMode::direct;
  const Matrix& Cw = sys.whitened_C();
  if (mode == FisherMode::doubling) {
    if (!equi) fail(ErrorCode::invalid_argument, "doubling Fisher recursion needs t_i = i h");
    return doubling_sum(mat_exp(sys.A(), h), Cw.transpose() * Cw, n);
  }
  const Eigen::Index d = sys.dim();
  Matrix H = Matrix::Zero(d, d);
  detail::for_each_propagator(sys.A(), schedule.times, [&](std::size_t, const Matrix& Phi) {
    const Matrix Y = Cw * Phi;
    H.noalias() += Y.transpose() * Y;
  });
  return detail::symmetrized(H);
}

/// sum_i e^{A^T t_i} C^T noise_cov^{-1} m_i, accumulated backwards:
/// v <- e^{A^T (t_i - t_{i-1})} (v + C^T noise_cov^{-1} m_i) for i = n..1.
inline Vector data_adjoint(const LtiSystem& sys, const MeasurementSet& ms) {
  const auto& times = ms.schedule.times;
  if (ms.values.cols() == 0) fail(ErrorCode::empty_measurements, "measurement set is empty");
  if (ms.values.rows() != sys.outputs() || static_cast<std::size_t>(ms.values.cols()) != times.size()) {
    fail(ErrorCode::dimension_mismatch, "measurements do not match system outputs or schedule");
  }
  detail::require_increasing_times(times);
  const Matrix Ct = sys.C().transpose();
  Vector v = Vector::Zero(sys.dim());
  double h = 0.0;
  const long n = static_cast<long>(times.size());
  if (detail::equispaced_from_zero(times, &h)) {
    const Matrix Et = mat_exp(sys.A(), h).transpose();
    for (long i = n - 1; i >= 0; --i) {
      v = Et * (v + Ct * sys.noise_solve(ms.values.col(i)));
    }
    return v;
  }
  for (long i = n - 1; i >= 0; --i) {
    const double prev = i == 0 ? 0.0 : times[static_cast<std::size_t>(i - 1)];
    v = mat_exp(sys.A(), times[static_cast<std::size_t>(i)] - prev).transpose() *
        (v + Ct * sys.noise_solve(ms.values.col(i)));
  }
  return v;
}

struct Posterior {
  Vector mean;
  Matrix cov;
  std::string method;
  std::optional<int> rank;  // empty means full order
  // cov = prior - update_factor * update_factor^T when available.
  std::optional<Matrix> update_factor;
};

/// Gamma_pos = R (I + R^T H R)^{-1} R^T and mean = Gamma_pos g, with the
/// prior factor R taken from the prior. Avoids forming Gamma_pr^{-1}.
inline Posterior posterior_from_information(const CompatiblePrior& prior, const Matrix& H, const Vector& g,
                                            std::string method, std::optional<int> rank = std::nullopt) {
  const Matrix& R = prior.factor.factor;
  const int d = prior.dim();
  if (H.rows() != d || H.cols() != d || g.size() != d) {
    fail(ErrorCode::dimension_mismatch, "information terms do not match prior dimension");
  }
  const Matrix K = detail::symmetrized(Matrix::Identity(d, d) + R.transpose() * H * R);
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::numerical_failure, "I + R^T H R is not positive definite; inputs inconsistent");
  }
  const Matrix X = llt.matrixL().solve(R.transpose());  // L^{-1} R^T
  Posterior p;
  p.cov = detail::symmetrized(X.transpose() * X);
  p.mean = p.cov * g;
  p.method = std::move(method);
  p.rank = rank;
  return p;
}

inline Posterior prior_as_posterior(const CompatiblePrior& prior, std::string method) {
  Posterior p;
  p.mean = Vector::Zero(prior.dim());
  p.cov = prior.cov;
  p.method = std::move(method);
  return p;
}

inline Posterior full_posterior(const CompatiblePrior& prior, const LtiSystem& sys, const MeasurementSet& ms,
                                FisherMode mode = FisherMode::auto_select) {
  if (prior.dim() != sys.dim()) fail(ErrorCode::dimension_mismatch, "prior and system differ in dimension");
  if (ms.values.cols() == 0) return prior_as_posterior(prior, "full");
  const Matrix H = fisher_information(sys, ms.schedule, mode);
  return posterior_from_information(prior, H, data_adjoint(sys, ms), "full");
}

// --- measurement files -------------------------------------------------------

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (trim(tok.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::parse_error, where + ": cannot parse number '" + tok + "'");
}

}  // namespace detail

/// CSV `time,y_1,...,y_k` at 17 significant digits, plus `<path>.meta`
/// holding key = value lines for the schedule and seeds.
inline void write_measurements(const std::string& path, const MeasurementSet& ms) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path);
  out << "time";
  for (Eigen::Index j = 0; j < ms.values.rows(); ++j) out << ",y_" << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < ms.values.cols(); ++i) {
    out << detail::fmt17(ms.schedule.times[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < ms.values.rows(); ++j) out << ',' << detail::fmt17(ms.values(j, i));
    out << "\n";
  }
  std::ofstream meta(path + ".meta");
  if (!meta) fail(ErrorCode::io_error, "cannot write " + path + ".meta");
  meta << "schedule_kind = " << to_string(ms.schedule.kind) << "\n"
       << "h = " << detail::fmt17(ms.schedule.h) << "\n"
       << "n = " << ms.schedule.n << "\n"
       << "schedule_seed = " << ms.schedule.seed << "\n"
       << "noise_seed = " << ms.seed << "\n"
       << "zero_noise = " << (ms.zero_noise ? "true" : "false") << "\n";
}

/// Reads a measurement CSV. The schedule is recorded as explicit; metadata,
/// when present next to the file, restores kind, h, n and seeds.
inline MeasurementSet read_measurements(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path);
  std::string line;
  int lineno = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::size_t k = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
    const std::string where = path + ":" + std::to_string(lineno);
    if (!header_seen) {
      if (cells.size() < 2 || cells[0] != "time") {
        fail(ErrorCode::parse_error, where + ": expected header time,y_1,...");
      }
      k = cells.size() - 1;
      header_seen = true;
      continue;
    }
    if (cells.size() != k + 1) {
      fail(ErrorCode::parse_error, where + ": expected " + std::to_string(k + 1) + " fields");
    }
    times.push_back(detail::parse_double(cells[0], where));
    std::vector<double> row;
    for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(detail::parse_double(cells[j], where));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorCode::empty_measurements, path + " has no measurement rows");

  MeasurementSet ms;
  ms.schedule = explicit_schedule(times);
  ms.values.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < k; ++j) ms.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];

  std::ifstream meta(path + ".meta");
  std::map<std::string, std::string> kv;
  while (meta && std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  if (kv.count("schedule_kind")) ms.schedule.kind = parse_schedule_kind(kv["schedule_kind"]);
  if (kv.count("h")) ms.schedule.h = std::stod(kv["h"]);
  if (kv.count("schedule_seed")) ms.schedule.seed = std::stoull(kv["schedule_seed"]);
  if (kv.count("noise_seed")) ms.seed = std::stoull(kv["noise_seed"]);
  if (kv.count("zero_noise")) ms.zero_noise = kv["zero_noise"] == "true";
  return ms;
}

}  // namespace btinf

#endif  // BTINF_INFERENCE_HPP
