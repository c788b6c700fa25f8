#ifndef BTINF_BENCH_HPP
#define BTINF_BENCH_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "btinf/lti.hpp"
#include "btinf/matrix_market.hpp"
#include "btinf/reduction.hpp"

namespace btinf {

struct HeatSpec {
  int d = 200;
  double output_fraction = 2.0 / 3.0;
  // Exactly one of these sets the diffusion scale.
  std::optional<double> target_abscissa = -0.1;
  std::optional<double> kappa;
  double noise_sigma = 0.008;
};

/// Abscissa of (d+1)^2 tridiag(1, -2, 1): the smallest Dirichlet mode.
inline double heat_unit_abscissa(int d) {
  const double np1 = d + 1.0;
  const double s = std::sin(std::numbers::pi / (2.0 * np1));
  return -4.0 * np1 * np1 * s * s;
}

/// Index (0-based) of the grid node x_j = j / (d+1) nearest to the given
/// fraction, ties toward the smaller index, clamped to the interior.
inline int heat_output_index(int d, double fraction) {
  const int j = static_cast<int>(std::ceil(fraction * (d + 1.0) - 0.5));
  return std::clamp(j, 1, d) - 1;
}

/// 1D heat equation on (0, 1) with homogeneous Dirichlet ends, central
/// differences on d interior nodes: A = kappa (d+1)^2 tridiag(1, -2, 1),
/// B = I, C picks one node. kappa is solved from target_abscissa unless given.
inline LtiSystem gen_heat(const HeatSpec& spec) {
  if (spec.d < 3) fail(ErrorCode::invalid_argument, "heat generator needs d >= 3");
  if (!(spec.output_fraction > 0.0 && spec.output_fraction < 1.0)) {
    fail(ErrorCode::invalid_argument, "output fraction must lie in (0, 1)");
  }
  if (!(spec.noise_sigma > 0.0)) fail(ErrorCode::invalid_argument, "noise sigma must be > 0");
  double kappa = 1.0;
  if (spec.kappa) {
    kappa = *spec.kappa;
    if (!(kappa > 0.0)) fail(ErrorCode::invalid_argument, "kappa must be > 0");
  } else if (spec.target_abscissa) {
    if (!(*spec.target_abscissa < 0.0)) fail(ErrorCode::invalid_argument, "target abscissa must be < 0");
    kappa = *spec.target_abscissa / heat_unit_abscissa(spec.d);
  }
  const int d = spec.d;
  const double scale = kappa * (d + 1.0) * (d + 1.0);
  Matrix A = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    A(i, i) = -2.0 * scale;
    if (i > 0) A(i, i - 1) = scale;
    if (i + 1 < d) A(i, i + 1) = scale;
  }
  Matrix C = Matrix::Zero(1, d);
  C(0, heat_output_index(d, spec.output_fraction)) = 1.0;
  Matrix noise(1, 1);
  noise(0, 0) = spec.noise_sigma * spec.noise_sigma;
  return LtiSystem(std::move(A), Matrix::Identity(d, d), std::move(C), std::move(noise));
}

struct SystemFiles {
  std::string A, C;
  std::optional<std::string> B;
  std::optional<std::string> noise;           // Matrix Market noise covariance
  std::optional<std::vector<double>> noise_diag;  // inline diagonal instead
};

inline LtiSystem load_system(const SystemFiles& files) {
  Matrix A = read_matrix_market(files.A);
  Matrix C = read_matrix_market(files.C);
  std::optional<Matrix> B;
  if (files.B) B = read_matrix_market(*files.B);
  Matrix noise;
  if (files.noise && files.noise_diag) {
    fail(ErrorCode::invalid_argument, "give the noise covariance as a file or a diagonal, not both");
  }
  if (files.noise) {
    noise = read_matrix_market(*files.noise);
  } else if (files.noise_diag) {
    noise = Vector::Map(files.noise_diag->data(), static_cast<Eigen::Index>(files.noise_diag->size())).asDiagonal();
  } else {
    fail(ErrorCode::invalid_argument, "noise covariance missing");
  }
  if (A.rows() != A.cols()) fail(ErrorCode::dimension_mismatch, files.A + ": A must be square");
  if (C.cols() != A.rows()) fail(ErrorCode::dimension_mismatch, files.C + ": C column count differs from A");
  if (B && B->rows() != A.rows()) fail(ErrorCode::dimension_mismatch, *files.B + ": B row count differs from A");
  if (noise.rows() != C.rows()) fail(ErrorCode::dimension_mismatch, "noise covariance size differs from output count");
  return LtiSystem(std::move(A), std::move(B), std::move(C), std::move(noise));
}

/// Writes A.mtx, C.mtx, noise.mtx and (when present) B.mtx into dir.
inline SystemFiles export_system(const std::string& dir, const LtiSystem& sys) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  SystemFiles files;
  files.A = (base / "A.mtx").string();
  files.C = (base / "C.mtx").string();
  files.noise = (base / "noise.mtx").string();
  write_matrix_market(files.A, sys.A());
  write_matrix_market(files.C, sys.C());
  write_matrix_market(*files.noise, sys.noise_cov());
  if (sys.B()) {
    files.B = (base / "B.mtx").string();
    write_matrix_market(*files.B, *sys.B());
  }
  return files;
}

/// Bases, operators and Hankel values as Matrix Market files plus a
/// key = value manifest.
inline void export_reduction(const std::string& dir, const BalancedReduction& red) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_matrix_market((base / "T_r.mtx").string(), red.T);
  write_matrix_market((base / "S_r.mtx").string(), red.S);
  write_matrix_market((base / "hankel.mtx").string(), red.full_spectrum);
  if (red.A_r.size()) write_matrix_market((base / "A_r.mtx").string(), red.A_r);
  if (red.C_r.size()) write_matrix_market((base / "C_r.mtx").string(), red.C_r);
  if (red.B_r) write_matrix_market((base / "B_r.mtx").string(), *red.B_r);
  std::ofstream m(base / "manifest");
  if (!m) fail(ErrorCode::io_error, "cannot write manifest in " + dir);
  m << "pencil = " << to_string(red.pencil) << "\n"
    << "order = " << red.order() << "\n"
    << "usable_rank = " << red.full_spectrum.size() << "\n"
    << "reduced_abscissa = " << detail::fmt17(red.reduced_abscissa) << "\n"
    << "reduced_stable = " << (red.reduced_stable ? "true" : "false") << "\n"
    << "hankel_ties = " << (red.has_ties ? "true" : "false") << "\n";
}

}  // namespace btinf

#endif  // BTINF_BENCH_HPP
