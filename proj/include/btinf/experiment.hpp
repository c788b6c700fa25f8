#ifndef BTINF_EXPERIMENT_HPP
#define BTINF_EXPERIMENT_HPP

// Config-driven error-versus-rank study: posterior mean and covariance errors
// of BT-Q, BT-H, OLR and OLRU against the exact posterior, plus the
// normalized pencil spectra. Outputs are CSV files, a manifest and a plot
// script.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "btinf/bench.hpp"
#include "btinf/inference.hpp"
#include "btinf/optimal.hpp"
#include "btinf/prior.hpp"
#include "btinf/reduction.hpp"

namespace btinf {

inline constexpr const char* kVersion = "0.1.0";

enum class PriorKind { spin_up, identity_spin_up, make_compatible, asserted };

struct ExperimentConfig {
  std::string name = "experiment";

  // [benchmark]
  std::string source = "heat";  // heat | files
  HeatSpec heat;
  SystemFiles files;

  // [schedule]
  ScheduleSpec schedule{ScheduleKind::equispaced, 0.1, 100, 0};
  FisherMode fisher_mode = FisherMode::auto_select;

  // [noise]: explicit sigmas, a covariance file, or calibration.
  std::vector<double> sigma;
  std::string noise_file;
  double calibrate_fraction = 0.0;

  // [prior]
  PriorKind prior = PriorKind::spin_up;
  std::string gamma0;  // Matrix Market path, or "identity"
  double ridge = 0.0;

  // [ranks], empty means the default grid
  std::vector<int> ranks;

  // [methods]
  std::set<std::string> methods = {"BT-Q", "BT-H", "OLR", "OLRU"};

  // [seeds]
  std::uint64_t truth_seed = 1;
  std::uint64_t noise_seed = 2;
  int n_replicates = 1;

  // [output]
  std::string output_dir = "out";
  int threads = 1;
};

namespace detail {

inline std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(parse_double(tok, what));
  }
  return out;
}

// "1-20, 25-60/5, 80" style rank lists.
inline std::vector<int> parse_rank_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  auto to_int = [](const std::string& t) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(t, &used);
      if (trim(t.substr(used)).empty()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::config_error, "bad rank entry '" + t + "'");
  };
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    int step = 1;
    const auto slash = tok.find('/');
    if (slash != std::string::npos) {
      step = to_int(trim(tok.substr(slash + 1)));
      tok = trim(tok.substr(0, slash));
    }
    const auto dash = tok.find('-');
    if (dash == std::string::npos) {
      out.push_back(to_int(tok));
      continue;
    }
    const int a = to_int(trim(tok.substr(0, dash)));
    const int b = to_int(trim(tok.substr(dash + 1)));
    if (step < 1 || b < a) fail(ErrorCode::config_error, "bad rank range '" + tok + "'");
    for (int r = a; r <= b; r += step) out.push_back(r);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt17(v[i]);
  return s;
}

}  // namespace detail

/// 1..20 in steps of one, then every fifth rank up to min(d, 60).
inline std::vector<int> default_ranks(int d) {
  std::vector<int> r;
  for (int i = 1; i <= std::min(d, 20); ++i) r.push_back(i);
  for (int i = 25; i <= std::min(d, 60); i += 5) r.push_back(i);
  return r;
}

/// Reads an INI-style config. Unknown sections or keys are errors; relative
/// paths are resolved against the config file's directory.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::config_error, std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> known = {
      {"experiment", {"name"}},
      {"benchmark", {"source", "d", "output_fraction", "target_abscissa", "kappa", "A", "B", "C"}},
      {"schedule", {"kind", "h", "n", "seed", "fisher_mode"}},
      {"noise", {"sigma", "file", "calibrate_fraction"}},
      {"prior", {"kind", "gamma0", "ridge"}},
      {"ranks", {"list"}},
      {"methods", {"list"}},
      {"seeds", {"truth_seed", "noise_seed", "n_replicates"}},
      {"output", {"dir", "threads"}},
  };
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) fail(ErrorCode::config_error, "unknown config section [" + section + "]");
    if (body.empty() && !body.data().empty()) {
      fail(ErrorCode::config_error, "key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) fail(ErrorCode::config_error, "unknown key '" + key + "' in [" + section + "]");
    }
  }
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return detail::trim(*v);
    return std::nullopt;
  };
  auto num = [&](const std::string& path, double fallback) {
    const auto v = get(path);
    return v ? detail::parse_double(*v, "config " + path) : fallback;
  };
  auto integer = [&](const std::string& path, long long fallback) -> long long {
    const auto v = get(path);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const long long x = std::stoll(*v, &used);
      if (detail::trim(v->substr(used)).empty()) return x;
    } catch (const std::exception&) {
    }
    // Accept integral values written in floating notation, e.g. 5e5.
    const double x = detail::parse_double(*v, "config " + path);
    if (x != std::floor(x)) fail(ErrorCode::config_error, "config " + path + " must be an integer");
    return static_cast<long long>(x);
  };
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return (fp.is_absolute() || base_dir.empty() ? fp : base_dir / fp).string();
  };

  ExperimentConfig c;
  try {
    c.name = get("experiment.name").value_or(c.name);

    c.source = get("benchmark.source").value_or("heat");
    if (c.source == "heat") {
      c.heat.d = static_cast<int>(integer("benchmark.d", c.heat.d));
      c.heat.output_fraction = num("benchmark.output_fraction", c.heat.output_fraction);
      if (get("benchmark.kappa")) {
        c.heat.kappa = num("benchmark.kappa", 1.0);
        c.heat.target_abscissa.reset();
      } else {
        c.heat.target_abscissa = num("benchmark.target_abscissa", -0.1);
      }
    } else if (c.source == "files") {
      const auto A = get("benchmark.A");
      const auto C = get("benchmark.C");
      if (!A || !C) fail(ErrorCode::config_error, "[benchmark] source = files needs A and C");
      c.files.A = resolve(*A);
      c.files.C = resolve(*C);
      if (const auto B = get("benchmark.B")) c.files.B = resolve(*B);
    } else {
      fail(ErrorCode::config_error, "[benchmark] source must be heat or files");
    }

    c.schedule.kind = parse_schedule_kind(get("schedule.kind").value_or("equispaced"));
    c.schedule.h = num("schedule.h", c.schedule.h);
    c.schedule.n = static_cast<long>(integer("schedule.n", c.schedule.n));
    c.schedule.seed = static_cast<std::uint64_t>(integer("schedule.seed", 0));
    c.fisher_mode = parse_fisher_mode(get("schedule.fisher_mode").value_or("auto"));

    if (const auto s = get("noise.sigma")) c.sigma = detail::parse_double_list(*s, "config noise.sigma");
    if (const auto f = get("noise.file")) c.noise_file = resolve(*f);
    c.calibrate_fraction = num("noise.calibrate_fraction", 0.0);
    const int noise_specs = !c.sigma.empty() + !c.noise_file.empty() + (c.calibrate_fraction > 0.0);
    if (noise_specs != 1) {
      fail(ErrorCode::config_error, "[noise] needs exactly one of sigma, file, calibrate_fraction");
    }
    if (c.calibrate_fraction >= 1.0) fail(ErrorCode::config_error, "calibrate_fraction must lie in (0, 1)");

    const std::string pk = get("prior.kind").value_or("spin_up");
    if (pk == "spin_up") c.prior = PriorKind::spin_up;
    else if (pk == "identity_spin_up") c.prior = PriorKind::identity_spin_up;
    else if (pk == "make_compatible") c.prior = PriorKind::make_compatible;
    else if (pk == "asserted") c.prior = PriorKind::asserted;
    else fail(ErrorCode::config_error, "unknown prior kind '" + pk + "'");
    if (const auto g = get("prior.gamma0")) c.gamma0 = *g == "identity" ? *g : resolve(*g);
    if ((c.prior == PriorKind::make_compatible || c.prior == PriorKind::asserted) && c.gamma0.empty()) {
      fail(ErrorCode::config_error, "prior kind " + pk + " needs prior.gamma0");
    }
    c.ridge = num("prior.ridge", 0.0);

    if (const auto r = get("ranks.list")) c.ranks = detail::parse_rank_list(*r);
    if (const auto m = get("methods.list")) {
      c.methods.clear();
      std::stringstream ss(*m);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        tok = detail::trim(tok);
        if (tok.empty()) continue;
        if (tok != "BT-Q" && tok != "BT-H" && tok != "OLR" && tok != "OLRU" && tok != "full") {
          fail(ErrorCode::config_error, "unknown method '" + tok + "'");
        }
        c.methods.insert(tok);
      }
      if (c.methods.empty()) fail(ErrorCode::config_error, "methods list is empty");
    }

    c.truth_seed = static_cast<std::uint64_t>(integer("seeds.truth_seed", 1));
    c.noise_seed = static_cast<std::uint64_t>(integer("seeds.noise_seed", 2));
    c.n_replicates = static_cast<int>(integer("seeds.n_replicates", 1));
    if (c.n_replicates < 1) fail(ErrorCode::config_error, "n_replicates must be >= 1");

    // Output goes relative to the working directory, not the config file.
    c.output_dir = get("output.dir").value_or(c.output_dir);
    c.threads = static_cast<int>(integer("output.threads", 1));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_error) throw;
    fail(ErrorCode::config_error, std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open config " + path);
  return parse_config(in, std::filesystem::path(path).parent_path());
}

/// x0 = R z with z ~ N(0, I) from CounterRng(seed, truth stream).
inline Vector draw_truth(const CompatiblePrior& prior, std::uint64_t seed) {
  CounterRng rng(seed, 0x7257ULL);
  return prior.factor.factor * rng.normal_vector(prior.factor.factor.cols());
}

inline Matrix calibrate_noise(const LtiSystem& sys, const MeasurementSet& noiseless, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) fail(ErrorCode::invalid_argument, "fraction must lie in (0, 1)");
  const Eigen::Index k = sys.outputs();
  Matrix G = Matrix::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double peak = noiseless.values.row(j).cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) fail(ErrorCode::invalid_argument, "output channel " + std::to_string(j + 1) + " is all zero");
    G(j, j) = std::pow(fraction * peak, 2);
  }
  return G;
}

/// Diagonal noise covariance with sigma_j = fraction * max_i |y_j(t_i)| for
/// the noiseless output of the seeded truth draw.
inline Matrix calibrate_noise(const Matrix& A, const Matrix& C, const CompatiblePrior& prior,
                              const ObservationSchedule& schedule, std::uint64_t truth_seed, double fraction) {
  const LtiSystem probe(A, std::nullopt, C, Matrix::Identity(C.rows(), C.rows()));
  return calibrate_noise(probe, simulate_measurements(probe, schedule, draw_truth(prior, truth_seed), 0, true),
                         fraction);
}

struct ResultRow {
  int r = 0;
  std::string method;
  double mean_rel_err = 0.0;
  double forstner_err = 0.0;
  std::optional<double> reduced_abscissa;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  Vector tau;    // sqrt of pencil (H, Gamma_pr^{-1}) eigenvalues
  Vector delta;  // Hankel values of (Gamma_pr, Q_m)
  double rel_frob_diff = 0.0;
  double abscissa = 0.0;
  int d = 0;
  std::vector<std::string> unavailable;  // "method r=..: reason"
  std::vector<int> ranks;
};

/// Everything the per-rank evaluations share. Immutable once built.
struct ExperimentSetup {
  LtiSystem sys;
  CompatiblePrior prior;
  ObservationSchedule schedule;
  Matrix H;
  Matrix Qm;
  double rel_frob_diff = 0.0;
  PencilDecomposition pencil;
  std::optional<BalancingTransform> btq, bth;
};

namespace detail {

inline LtiSystem build_system(const ExperimentConfig& c, const Matrix& noise) {
  if (c.source == "heat") {
    const LtiSystem base = gen_heat(c.heat);
    return LtiSystem(base.A(), base.B(), base.C(), noise);
  }
  SystemFiles f = c.files;
  f.noise_diag = std::vector<double>(static_cast<std::size_t>(noise.rows()));
  for (Eigen::Index i = 0; i < noise.rows(); ++i) (*f.noise_diag)[static_cast<std::size_t>(i)] = 1.0;
  const LtiSystem base = load_system(f);
  return LtiSystem(base.A(), base.B(), base.C(), noise);
}

inline Matrix read_gamma0(const ExperimentConfig& c, int d) {
  return c.gamma0 == "identity" ? Matrix(Matrix::Identity(d, d)) : read_matrix_market(c.gamma0);
}

inline CompatiblePrior build_prior(const ExperimentConfig& c, const LtiSystem& sys) {
  switch (c.prior) {
    case PriorKind::spin_up:
      if (!sys.B()) fail(ErrorCode::config_error, "spin_up prior needs an input matrix B");
      return spin_up_prior(sys.A(), *sys.B(), c.ridge);
    case PriorKind::identity_spin_up:
      return spin_up_prior(sys.A(), Matrix::Identity(sys.dim(), sys.dim()), c.ridge);
    case PriorKind::make_compatible:
      return make_compatible(sys.A(), read_gamma0(c, sys.dim())).prior;
    case PriorKind::asserted:
      return assert_prior(sys.A(), read_gamma0(c, sys.dim()));
  }
  fail(ErrorCode::config_error, "unknown prior kind");
}

inline int output_count(const ExperimentConfig& c) {
  if (c.source == "heat") return 1;
  return static_cast<int>(read_matrix_market(c.files.C).rows());
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    fail(e.code(), std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace detail

struct ExperimentInputs {
  LtiSystem sys;
  CompatiblePrior prior;
  ObservationSchedule schedule;
};

/// System with its final noise covariance, prior and materialized schedule.
inline ExperimentInputs build_inputs(const ExperimentConfig& c) {
  // The prior depends only on (A, B), so a unit-noise system is enough
  // until the noise covariance is known.
  const int k = detail::stage("system", [&] { return detail::output_count(c); });
  const LtiSystem unit = detail::stage("system", [&] { return detail::build_system(c, Matrix::Identity(k, k)); });
  const CompatiblePrior prior = detail::stage("prior", [&] { return detail::build_prior(c, unit); });
  const ObservationSchedule schedule = detail::stage("schedule", [&] { return sample_schedule(c.schedule); });

  const Matrix noise = detail::stage("noise", [&]() -> Matrix {
    if (!c.noise_file.empty()) return read_matrix_market(c.noise_file);
    if (!c.sigma.empty()) {
      if (c.sigma.size() != 1 && static_cast<int>(c.sigma.size()) != k) {
        fail(ErrorCode::config_error, "noise.sigma needs 1 or " + std::to_string(k) + " entries");
      }
      Matrix G = Matrix::Zero(k, k);
      for (int j = 0; j < k; ++j) G(j, j) = std::pow(c.sigma.size() == 1 ? c.sigma[0] : c.sigma[static_cast<std::size_t>(j)], 2);
      return G;
    }
    return calibrate_noise(unit.A(), unit.C(), prior, schedule, c.truth_seed, c.calibrate_fraction);
  });
  return {detail::stage("system", [&] { return detail::build_system(c, noise); }), prior, schedule};
}

/// Builds the inputs plus H, Q_m, the pencil and both balancing transforms.
inline ExperimentSetup prepare_experiment(const ExperimentConfig& c) {
  ExperimentInputs in = build_inputs(c);
  const LtiSystem& sys = in.sys;
  const CompatiblePrior& prior = in.prior;
  const ObservationSchedule& schedule = in.schedule;
  ExperimentSetup s{sys, prior, schedule, {}, {}, 0.0, {}, std::nullopt, std::nullopt};
  s.H = detail::stage("fisher", [&] { return fisher_information(sys, schedule, c.fisher_mode); });
  s.Qm = detail::stage("gramian", [&] { return noisy_observability_gramian(sys); });
  s.rel_frob_diff = (c.schedule.h * s.H - s.Qm).norm() / s.Qm.norm();
  s.pencil = detail::stage("pencil", [&] { return spantini_eigenpairs(s.H, prior); });
  s.btq = detail::stage("BT-Q", [&] { return bt_q_transform(sys, prior); });
  if (c.methods.count("BT-H")) s.bth = detail::stage("BT-H", [&] { return bt_h_transform(sys, prior, schedule, c.fisher_mode); });
  return s;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, int threads_override = 0) {
  const ExperimentSetup s = prepare_experiment(c);
  const int d = s.sys.dim();
  ExperimentResult res;
  res.d = d;
  res.rel_frob_diff = s.rel_frob_diff;
  res.abscissa = spectral_abscissa(s.sys.A());
  res.tau = s.pencil.tau_sq.cwiseSqrt();
  res.delta = s.btq->singular_values().head(s.btq->rank());
  res.ranks = c.ranks.empty() ? default_ranks(d) : c.ranks;
  for (int r : res.ranks) {
    if (r < 1 || r > d) fail(ErrorCode::config_error, "rank " + std::to_string(r) + " outside [1, d]");
  }

  // Replicates share the schedule and H; only truth and noise change.
  struct Replicate {
    MeasurementSet ms;
    Vector g;
    Vector mean;
  };
  Posterior full = posterior_from_information(s.prior, s.H, Vector::Zero(d), "full");
  std::vector<Replicate> reps;
  for (int j = 0; j < c.n_replicates; ++j) {
    Replicate rep;
    rep.ms = detail::stage("measurements", [&] {
      return simulate_measurements(s.sys, s.schedule, draw_truth(s.prior, c.truth_seed + j), c.noise_seed + j);
    });
    rep.g = data_adjoint(s.sys, rep.ms);
    rep.mean = full.cov * rep.g;
    reps.push_back(std::move(rep));
  }

  const std::vector<std::string> order = {"BT-Q", "BT-H", "OLR", "OLRU", "full"};
  std::vector<std::string> methods;
  for (const auto& m : order)
    if (c.methods.count(m)) methods.push_back(m);

  struct Cell {
    std::optional<ResultRow> row;
    std::string unavailable;
  };
  const std::size_t nr = res.ranks.size(), nm = methods.size();
  std::vector<Cell> cells(nr * nm);

  auto mean_err = [&](auto&& approx_mean) {
    double acc = 0.0;
    for (const auto& rep : reps) acc += (approx_mean(rep) - rep.mean).norm() / rep.mean.norm();
    return acc / static_cast<double>(reps.size());
  };

  auto evaluate = [&](std::size_t ri) {
    const int r = res.ranks[ri];
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const std::string& m = methods[mi];
      Cell& cell = cells[ri * nm + mi];
      ResultRow row;
      row.r = r;
      row.method = m;
      try {
        if (m == "BT-Q" || m == "BT-H") {
          const BalancingTransform& bt = m == "BT-Q" ? *s.btq : *s.bth;
          if (r > bt.rank()) {
            cell.unavailable = m + " r=" + std::to_string(r) + ": exceeds usable rank " + std::to_string(bt.rank());
            continue;
          }
          const BalancedReduction red = project(bt.truncate(r), s.sys);
          const LtiSystem rsys = detail::reduced_system(red, s.sys);
          const Matrix Hbt = detail::symmetrized(red.S * fisher_information(rsys, s.schedule, c.fisher_mode) *
                                                 red.S.transpose());
          if (!Hbt.allFinite()) {
            cell.unavailable = m + " r=" + std::to_string(r) + ": reduced Fisher information is not finite";
            continue;
          }
          const Posterior approx = posterior_from_information(s.prior, Hbt, Vector::Zero(d), m, r);
          row.forstner_err = forstner_distance(full.cov, approx.cov);
          row.mean_rel_err = mean_err([&](const Replicate& rep) -> Vector {
            return approx.cov * (red.S * data_adjoint(rsys, rep.ms));
          });
          row.reduced_abscissa = red.reduced_abscissa;
        } else if (m == "OLR" || m == "OLRU") {
          const Matrix cov = olru_covariance(s.prior, s.pencil, r);
          const Matrix proj = oblique_projector(s.pencil, r);
          row.forstner_err = forstner_distance(full.cov, cov);
          row.mean_rel_err = mean_err([&](const Replicate& rep) -> Vector {
            return m == "OLR" ? Vector(cov * (proj * rep.g)) : Vector(cov * rep.g);
          });
        } else {
          // Recomputed end to end, so this row checks the shared setup.
          const Posterior again = full_posterior(s.prior, s.sys, reps.front().ms, c.fisher_mode);
          row.forstner_err = forstner_distance(full.cov, again.cov);
          row.mean_rel_err = mean_err([&](const Replicate& rep) -> Vector {
            return full_posterior(s.prior, s.sys, rep.ms, c.fisher_mode).mean;
          });
        }
        if (!std::isfinite(row.forstner_err) || !std::isfinite(row.mean_rel_err)) {
          cell.unavailable = m + " r=" + std::to_string(r) + ": non-finite error";
          continue;
        }
        cell.row = row;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::over_truncation) {
          cell.unavailable = m + " r=" + std::to_string(r) + ": " + e.what();
          continue;
        }
        fail(e.code(), "stage rank " + std::to_string(r) + " " + m + ": " + e.what());
      }
    }
  };

  const int threads = std::max(1, threads_override > 0 ? threads_override : c.threads);
  if (threads == 1 || nr < 2) {
    for (std::size_t ri = 0; ri < nr; ++ri) evaluate(ri);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < std::min<int>(threads, static_cast<int>(nr)); ++t) {
      pool.emplace_back([&] {
        for (std::size_t ri = next++; ri < nr; ri = next++) {
          try {
            evaluate(ri);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  for (const Cell& cell : cells) {
    if (cell.row) res.rows.push_back(*cell.row);
    if (!cell.unavailable.empty()) res.unavailable.push_back(cell.unavailable);
  }
  return res;
}

inline void write_results(const std::string& dir, const ExperimentConfig& c, const ExperimentResult& res) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream out(base / "results.csv");
    if (!out) fail(ErrorCode::io_error, "cannot write results.csv in " + dir);
    out << "r,method,mean_rel_err,forstner_err,reduced_abscissa\n";
    for (const ResultRow& row : res.rows) {
      out << row.r << ',' << row.method << ',' << detail::fmt17(row.mean_rel_err) << ','
          << detail::fmt17(row.forstner_err) << ',' << (row.reduced_abscissa ? detail::fmt17(*row.reduced_abscissa) : "")
          << '\n';
    }
  }
  {
    std::ofstream out(base / "spectra.csv");
    if (!out) fail(ErrorCode::io_error, "cannot write spectra.csv in " + dir);
    out << "i,tau_over_tau1,delta_over_delta1\n";
    const Eigen::Index n = std::max(res.tau.size(), res.delta.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      out << (i + 1) << ',';
      if (i < res.tau.size() && res.tau(0) > 0.0) out << detail::fmt17(res.tau(i) / res.tau(0));
      out << ',';
      if (i < res.delta.size()) out << detail::fmt17(res.delta(i) / res.delta(0));
      out << '\n';
    }
  }
  {
    std::ofstream out(base / "manifest");
    if (!out) fail(ErrorCode::io_error, "cannot write manifest in " + dir);
    out << "name = " << c.name << "\n"
        << "version = " << kVersion << "\n"
        << "source = " << c.source << "\n"
        << "d = " << res.d << "\n"
        << "schedule_kind = " << to_string(c.schedule.kind) << "\n"
        << "h = " << detail::fmt17(c.schedule.h) << "\n"
        << "n = " << c.schedule.n << "\n"
        << "schedule_seed = " << c.schedule.seed << "\n"
        << "truth_seed = " << c.truth_seed << "\n"
        << "noise_seed = " << c.noise_seed << "\n"
        << "n_replicates = " << c.n_replicates << "\n"
        << "noise_sigma = " << detail::fmt_list(c.sigma) << "\n"
        << "calibrate_fraction = " << detail::fmt17(c.calibrate_fraction) << "\n"
        << "ridge = " << detail::fmt17(c.ridge) << "\n"
        << "abscissa = " << detail::fmt17(res.abscissa) << "\n"
        << "rel_frob_diff = " << detail::fmt17(res.rel_frob_diff) << "\n"
        << "hankel_rank = " << res.delta.size() << "\n";
    out << "methods = ";
    bool first = true;
    for (const auto& m : c.methods) {
      out << (first ? "" : ",") << m;
      first = false;
    }
    out << "\nranks = ";
    for (std::size_t i = 0; i < res.ranks.size(); ++i) out << (i ? "," : "") << res.ranks[i];
    out << "\n";
    for (const auto& u : res.unavailable) out << "unavailable = " << u << "\n";
  }
  {
    std::ofstream out(base / "plot.py");
    out << R"PY(# Renders results.csv and spectra.csv: python3 plot.py [dir]
import csv, sys, os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))

def rows(name):
    with open(os.path.join(here, name)) as f:
        return list(csv.DictReader(f))

spectra = rows("spectra.csv")
res = rows("results.csv")
fig, ax = plt.subplots(1, 3, figsize=(14, 4))
for col, label in (("tau_over_tau1", "tau_i / tau_1"), ("delta_over_delta1", "delta_i / delta_1")):
    # Exact zeros of the pencil cannot be drawn on a log axis.
    pts = [(int(r["i"]), float(r[col])) for r in spectra if r[col] and float(r[col]) > 0]
    ax[0].semilogy([p[0] for p in pts], [p[1] for p in pts], label=label)
ax[0].set_xlabel("i"); ax[0].legend(); ax[0].set_title("normalized spectra")
for m in sorted({r["method"] for r in res}):
    sel = [r for r in res if r["method"] == m]
    rr = [int(r["r"]) for r in sel]
    ax[1].semilogy(rr, [max(float(r["mean_rel_err"]), 1e-300) for r in sel], "o-", label=m)
    ax[2].semilogy(rr, [max(float(r["forstner_err"]), 1e-300) for r in sel], "o-", label=m)
ax[1].set_xlabel("r"); ax[1].set_title("relative mean error"); ax[1].legend()
ax[2].set_xlabel("r"); ax[2].set_title("Forstner covariance error"); ax[2].legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "errors.png"), dpi=150)
)PY";
  }
}

}  // namespace btinf

#endif  // BTINF_EXPERIMENT_HPP
