// Command-line front end. Every subcommand writes its results under --out and
// reports failures as a single "error: <category>: <message>" line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "btinf/bench.hpp"
#include "btinf/experiment.hpp"
#include "btinf/matrix_market.hpp"
#include "btinf/optimal.hpp"
#include "btinf/reduction.hpp"

using namespace btinf;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

// Flags describing a system, prior and schedule without a config file.
struct InputFlags {
  std::string A, B, C, noise;
  std::vector<double> sigma;
  std::string prior_kind = "spin_up";
  std::string gamma0;
  double ridge = 0.0;
  std::string kind = "equispaced";
  double h = 0.1;
  long n = 100;
  std::uint64_t schedule_seed = 0;
  std::string fisher_mode = "auto";

  void attach(CLI::App* cmd) {
    cmd->add_option("--A", A, "Matrix Market file for A");
    cmd->add_option("--B", B, "Matrix Market file for B");
    cmd->add_option("--C", C, "Matrix Market file for C");
    cmd->add_option("--noise", noise, "Matrix Market noise covariance");
    cmd->add_option("--sigma", sigma, "noise standard deviations, one or one per output")->delimiter(',');
    cmd->add_option("--prior-kind", prior_kind, "spin_up | identity_spin_up | make_compatible | asserted");
    cmd->add_option("--gamma0", gamma0, "initial prior covariance (file or 'identity')");
    cmd->add_option("--ridge", ridge, "ridge added to a singular spin-up prior");
    cmd->add_option("--kind", kind, "schedule kind: explicit | equispaced | uniform_subinterval | poisson");
    cmd->add_option("--step", h, "schedule spacing h");
    cmd->add_option("--count", n, "number of observations n");
    cmd->add_option("--schedule-seed", schedule_seed, "seed for random schedules");
    cmd->add_option("--fisher-mode", fisher_mode, "direct | doubling | auto");
  }
};

ExperimentConfig config_from(const Globals& g, const InputFlags& f) {
  if (!g.config.empty()) {
    ExperimentConfig c = load_config(g.config);
    if (g.seed) c.truth_seed = c.noise_seed = *g.seed;
    return c;
  }
  if (f.A.empty() || f.C.empty()) fail(ErrorCode::invalid_argument, "give --config or both --A and --C");
  // Reuse the config parser so flags and files obey the same rules.
  std::ostringstream ini;
  ini << "[benchmark]\nsource = files\nA = " << f.A << "\nC = " << f.C << "\n";
  if (!f.B.empty()) ini << "B = " << f.B << "\n";
  ini << "[schedule]\nkind = " << f.kind << "\nh = " << detail::fmt17(f.h) << "\nn = " << f.n
      << "\nseed = " << f.schedule_seed << "\nfisher_mode = " << f.fisher_mode << "\n";
  ini << "[noise]\n";
  if (!f.noise.empty()) ini << "file = " << f.noise << "\n";
  else ini << "sigma = " << detail::fmt_list(f.sigma.empty() ? std::vector<double>{1.0} : f.sigma) << "\n";
  ini << "[prior]\nkind = " << f.prior_kind << "\nridge = " << detail::fmt17(f.ridge) << "\n";
  if (!f.gamma0.empty()) ini << "gamma0 = " << f.gamma0 << "\n";
  if (g.seed) ini << "[seeds]\ntruth_seed = " << *g.seed << "\nnoise_seed = " << *g.seed << "\n";
  std::istringstream in(ini.str());
  return parse_config(in, fs::current_path());
}

std::string path_in(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return (fs::path(g.out) / name).string();
}

void write_manifest(const Globals& g, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream m(path_in(g, "manifest"));
  if (!m) fail(ErrorCode::io_error, "cannot write manifest in " + g.out);
  m << "version = " << kVersion << "\n";
  for (const auto& [k, v] : kv) m << k << " = " << v << "\n";
}

void cmd_gen_heat(const Globals& g, const HeatSpec& spec) {
  const LtiSystem sys = gen_heat(spec);
  write_matrix_market(path_in(g, "A.mtx"), sys.A());
  write_matrix_market(path_in(g, "B.mtx"), *sys.B());
  write_matrix_market(path_in(g, "C.mtx"), sys.C());
  write_manifest(g, {{"generator", "heat"},
                     {"d", std::to_string(sys.dim())},
                     {"output_fraction", detail::fmt17(spec.output_fraction)},
                     {"output_index", std::to_string(heat_output_index(sys.dim(), spec.output_fraction) + 1)},
                     {"abscissa", detail::fmt17(spectral_abscissa(sys.A()))},
                     {"noise_sigma", detail::fmt17(spec.noise_sigma)}});
}

void cmd_gramian(const Globals& g, const InputFlags& f) {
  const ExperimentConfig c = config_from(g, f);
  const ExperimentInputs in = build_inputs(c);
  std::vector<std::pair<std::string, std::string>> kv = {{"abscissa", detail::fmt17(spectral_abscissa(in.sys.A()))}};
  if (in.sys.B()) write_matrix_market(path_in(g, "P.mtx"), reachability_gramian(in.sys));
  const Matrix Qm = noisy_observability_gramian(in.sys);
  write_matrix_market(path_in(g, "Qm.mtx"), Qm);
  const Matrix H = fisher_information(in.sys, in.schedule, c.fisher_mode);
  write_matrix_market(path_in(g, "H.mtx"), H);
  if (in.schedule.kind == ScheduleKind::equispaced) {
    kv.emplace_back("rel_frob_diff", detail::fmt17((in.schedule.h * H - Qm).norm() / Qm.norm()));
  }
  kv.emplace_back("n", std::to_string(in.schedule.times.size()));
  write_manifest(g, kv);
}

void cmd_make_prior(const Globals& g, const InputFlags& f) {
  const ExperimentConfig c = config_from(g, f);
  const ExperimentInputs in = build_inputs(c);
  write_matrix_market(path_in(g, "prior.mtx"), in.prior.cov);
  write_matrix_market(path_in(g, "prior_factor.mtx"), in.prior.factor.factor);
  if (c.prior == PriorKind::make_compatible) {
    write_matrix_market(path_in(g, "delta.mtx"), make_compatible(in.sys.A(), detail::read_gamma0(c, in.sys.dim())).delta);
  }
  write_manifest(g, {{"provenance", to_string(in.prior.provenance)},
                     {"residual_abscissa", detail::fmt17(in.prior.residual_abscissa)},
                     {"ridge", detail::fmt17(in.prior.ridge)}});
}

BalancedReduction reduce_with(const ExperimentInputs& in, const ExperimentConfig& c, const std::string& pencil,
                              const ObservationSchedule& schedule, int r) {
  if (pencil == "BT-Q") return project(bt_q_transform(in.sys, in.prior).truncate(r), in.sys);
  if (pencil == "BT-H") return project(bt_h_transform(in.sys, in.prior, schedule, c.fisher_mode).truncate(r), in.sys);
  fail(ErrorCode::invalid_argument, "unknown pencil '" + pencil + "' (BT-Q or BT-H)");
}

void cmd_reduce(const Globals& g, const InputFlags& f, const std::string& pencil, int r) {
  const ExperimentConfig c = config_from(g, f);
  const ExperimentInputs in = build_inputs(c);
  export_reduction(g.out, reduce_with(in, c, pencil, in.schedule, r));
}

void cmd_simulate(const Globals& g, const InputFlags& f, const std::string& x0_path, bool zero_noise) {
  const ExperimentConfig c = config_from(g, f);
  const ExperimentInputs in = build_inputs(c);
  Vector x0;
  if (!x0_path.empty()) {
    const Matrix X = read_matrix_market(x0_path);
    if (X.cols() != 1 || X.rows() != in.sys.dim()) fail(ErrorCode::dimension_mismatch, x0_path + ": x0 must be d x 1");
    x0 = X.col(0);
  } else {
    x0 = draw_truth(in.prior, c.truth_seed);
  }
  const MeasurementSet ms = simulate_measurements(in.sys, in.schedule, x0, c.noise_seed, zero_noise);
  write_measurements(path_in(g, "measurements.csv"), ms);
  write_matrix_market(path_in(g, "truth.mtx"), Matrix(x0));
}

void cmd_infer(const Globals& g, const InputFlags& f, const std::string& csv, const std::string& method, int r) {
  const MeasurementSet ms = read_measurements(csv);
  const ExperimentConfig c = config_from(g, f);
  const ExperimentInputs in = build_inputs(c);
  const Posterior full = full_posterior(in.prior, in.sys, ms, c.fisher_mode);
  Posterior post;
  if (method == "full") {
    post = full;
  } else if (method == "BT-Q" || method == "BT-H") {
    post = bt_posterior(reduce_with(in, c, method, ms.schedule, r), in.sys, in.prior, ms, c.fisher_mode);
  } else if (method == "OLR" || method == "OLRU") {
    const Matrix H = fisher_information(in.sys, ms.schedule, c.fisher_mode);
    const PencilDecomposition p = spantini_eigenpairs(H, in.prior);
    const Vector g_adj = data_adjoint(in.sys, ms);
    post.cov = olru_covariance(in.prior, p, r);
    post.mean = method == "OLR" ? olr_mean(in.prior, p, g_adj, r) : olru_mean(in.prior, p, g_adj, r);
    post.method = method;
    post.rank = r;
  } else {
    fail(ErrorCode::invalid_argument, "unknown method '" + method + "'");
  }
  write_matrix_market(path_in(g, "mean.mtx"), Matrix(post.mean));
  write_matrix_market(path_in(g, "cov.mtx"), post.cov);
  std::vector<std::pair<std::string, std::string>> kv = {{"method", method},
                                                         {"observations", std::to_string(ms.count())}};
  if (method != "full") {
    kv.emplace_back("r", std::to_string(r));
    kv.emplace_back("mean_rel_err", detail::fmt17((post.mean - full.mean).norm() / full.mean.norm()));
    kv.emplace_back("forstner_err", detail::fmt17(forstner_distance(full.cov, post.cov)));
  }
  write_manifest(g, kv);
}

void cmd_experiment(const Globals& g, bool out_given) {
  if (g.config.empty()) fail(ErrorCode::config_error, "experiment needs --config");
  ExperimentConfig c = load_config(g.config);
  if (out_given) c.output_dir = g.out;
  if (g.seed) c.truth_seed = c.noise_seed = *g.seed;
  const ExperimentResult res = run_experiment(c, g.threads);
  write_results(c.output_dir, c, res);
  std::cout << c.name << ": d=" << res.d << " rel_frob_diff=" << detail::fmt17(res.rel_frob_diff)
            << " rows=" << res.rows.size() << " unavailable=" << res.unavailable.size() << " -> " << c.output_dir
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced truncation for Bayesian initial-state inference in LTI systems", "btinf"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment or input config file");
  CLI::Option* out_opt = app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed, "seed for truth and noise draws");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.set_version_flag("--version", std::string(kVersion));

  HeatSpec heat;
  double target = -0.1;
  std::optional<double> kappa;
  auto* gen = app.add_subcommand("gen-heat", "write a generated heat-equation system as Matrix Market files");
  gen->add_option("--d", heat.d, "state dimension")->check(CLI::Range(3, 1 << 20));
  gen->add_option("--output-fraction", heat.output_fraction, "output location along the rod");
  gen->add_option("--target-abscissa", target, "spectral abscissa to calibrate to");
  gen->add_option("--kappa", kappa, "raw diffusion coefficient instead of calibration");
  gen->add_option("--sigma", heat.noise_sigma, "noise standard deviation recorded in the manifest");

  InputFlags flags;
  auto* gram = app.add_subcommand("gramian", "compute P, Q_m and H for a system and schedule");
  auto* mk = app.add_subcommand("make-prior", "build a compatible prior (spin-up or modification)");
  std::string pencil = "BT-Q";
  int r = 1;
  auto* red = app.add_subcommand("reduce", "export a balanced reduction");
  red->add_option("--pencil", pencil, "BT-Q or BT-H");
  red->add_option("--r", r, "reduced order")->required();
  std::string x0_path;
  bool zero_noise = false;
  auto* sim = app.add_subcommand("simulate", "simulate measurements into a CSV file");
  sim->add_option("--x0", x0_path, "initial state (d x 1 Matrix Market); drawn from the prior otherwise");
  sim->add_flag("--zero-noise", zero_noise, "omit measurement noise");
  std::string csv, method = "full";
  int infer_r = 1;
  auto* inf = app.add_subcommand("infer", "posterior from a measurement CSV");
  inf->add_option("--measurements", csv, "measurement CSV")->required();
  inf->add_option("--method", method, "full | BT-Q | BT-H | OLR | OLRU");
  inf->add_option("--r", infer_r, "rank for approximate methods");
  auto* exp = app.add_subcommand("experiment", "run an error-versus-rank experiment from --config");
  for (CLI::App* cmd : {gram, mk, red, sim, inf}) flags.attach(cmd);
  for (CLI::App* cmd : {gen, gram, mk, red, sim, inf, exp}) cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      if (kappa) {
        heat.kappa = kappa;
        heat.target_abscissa.reset();
      } else {
        heat.target_abscissa = target;
      }
      cmd_gen_heat(g, heat);
    } else if (*gram) {
      cmd_gramian(g, flags);
    } else if (*mk) {
      cmd_make_prior(g, flags);
    } else if (*red) {
      cmd_reduce(g, flags, pencil, r);
    } else if (*sim) {
      cmd_simulate(g, flags, x0_path, zero_noise);
    } else if (*inf) {
      cmd_infer(g, flags, csv, method, infer_r);
    } else if (*exp) {
      cmd_experiment(g, out_opt->count() > 0);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << category(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
