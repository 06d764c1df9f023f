#include "nis/nlsolve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nis/linimg.hpp"

namespace nis {

Complex soft_threshold(Complex z, double tau) {
  if (!(tau >= 0.0)) throw DomainError("soft_threshold: tau must be >= 0");
  const double mag = std::abs(z);
  if (mag <= tau) return 0.0;
  return z * ((mag - tau) / mag);
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// One orthonormal Haar analysis (inverse = false) or synthesis step along a
// strided run of `len` samples; len must be even.
void haar_1d(Complex* data, int len, int stride, bool inverse, std::vector<Complex>& tmp) {
  const int half = len / 2;
  tmp.resize(len);
  if (!inverse) {
    for (int i = 0; i < half; ++i) {
      const Complex a = data[(2 * i) * stride];
      const Complex b = data[(2 * i + 1) * stride];
      tmp[i] = (a + b) * kInvSqrt2;
      tmp[half + i] = (a - b) * kInvSqrt2;
    }
  } else {
    for (int i = 0; i < half; ++i) {
      const Complex s = data[i * stride];
      const Complex d = data[(half + i) * stride];
      tmp[2 * i] = (s + d) * kInvSqrt2;
      tmp[2 * i + 1] = (s - d) * kInvSqrt2;
    }
  }
  for (int i = 0; i < len; ++i) data[i * stride] = tmp[i];
}

std::vector<std::pair<int, int>> haar_levels(int nx, int ny) {
  std::vector<std::pair<int, int>> levels;
  int w = nx;
  int h = ny;
  while (w >= 2 && h >= 2 && w % 2 == 0 && h % 2 == 0) {
    levels.emplace_back(w, h);
    w /= 2;
    h /= 2;
  }
  return levels;
}

CVector haar(const Grid& grid, const CVector& x, bool inverse) {
  const int nx = grid.nx();
  CVector y = x;
  std::vector<Complex> tmp;
  auto levels = haar_levels(nx, grid.ny());
  if (inverse) std::reverse(levels.begin(), levels.end());
  for (auto [w, h] : levels) {
    if (!inverse) {
      for (int r = 0; r < h; ++r) haar_1d(y.data() + r * nx, w, 1, false, tmp);
      for (int c = 0; c < w; ++c) haar_1d(y.data() + c, h, nx, false, tmp);
    } else {
      for (int c = 0; c < w; ++c) haar_1d(y.data() + c, h, nx, true, tmp);
      for (int r = 0; r < h; ++r) haar_1d(y.data() + r * nx, w, 1, true, tmp);
    }
  }
  return y;
}

void check_vector(const Grid& grid, const CVector& x, const char* who) {
  if (x.size() != grid.size()) throw ShapeError(std::string(who) + ": vector length does not match grid");
}

}  // namespace

CVector transform_forward(SparseTransform kind, const Grid& grid, const CVector& x) {
  check_vector(grid, x, "transform_forward");
  return kind == SparseTransform::Haar ? haar(grid, x, false) : x;
}

CVector transform_adjoint(SparseTransform kind, const Grid& grid, const CVector& x) {
  check_vector(grid, x, "transform_adjoint");
  return kind == SparseTransform::Haar ? haar(grid, x, true) : x;
}

void InversionConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(threshold_tau >= 0.0)) throw ConfigError("threshold_tau must be >= 0");
  if (cg_iters < 1) throw ConfigError("cg_iters must be >= 1");
  if (!(cg_tol > 0.0)) throw ConfigError("cg_tol must be > 0");
  if (!(tikhonov_eps >= 0.0)) throw ConfigError("tikhonov_eps must be >= 0");
}

std::string InversionTrace::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,data_residual,objective\n";
  for (const auto& e : entries) os << e.iteration << ',' << e.data_residual << ',' << e.objective << '\n';
  return os.str();
}

void InversionTrace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_csv();
  if (!out) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Jacobian

Jacobian::Jacobian(const Operators& ops, const ContrastMap& chi, SolverOptions options)
    : ops_(&ops), chi_(chi.chi), solver_(ops, chi.chi, options), fields_(solve_fields(ops, chi, solver_)) {}

Jacobian::Jacobian(const Operators& ops, const ContrastMap& chi, FieldSet fields, SolverOptions options)
    : ops_(&ops), chi_(chi.chi), solver_(ops, chi.chi, options), fields_(std::move(fields)) {
  if (fields_.e_tot.rows() != ops.pixels() || fields_.e_tot.cols() != ops.n_tx()) {
    throw ShapeError("Jacobian: field set does not match operators");
  }
}

CMatrix Jacobian::apply(const CVector& dchi) const {
  const Operators& ops = *ops_;
  if (dchi.size() != ops.pixels()) throw ShapeError("jacobian_apply: dchi length must be P");
  const CMatrix u = dchi.asDiagonal() * fields_.e_tot;
  const CMatrix inner = solver_.solve_columns(ops.gs * u, "transmitter");
  const CMatrix v = u + chi_.asDiagonal() * inner;
  return (ops.gd * v).transpose();
}

CVector Jacobian::adjoint_apply(const CMatrix& residual) const {
  const Operators& ops = *ops_;
  if (residual.rows() != ops.n_tx() || residual.cols() != ops.n_rx()) {
    throw ShapeError("jacobian_adjoint_apply: residual must be N x M");
  }
  const CMatrix g = ops.gd.adjoint() * residual.transpose();
  const CMatrix inner = solver_.solve_adjoint_columns(chi_.conjugate().asDiagonal() * g, "transmitter");
  const CMatrix back = g + ops.gs.adjoint() * inner;
  return fields_.e_tot.conjugate().cwiseProduct(back).rowwise().sum();
}

CMatrix jacobian_apply(const Operators& ops, const ContrastMap& chi, const FieldSet& fields, const CVector& dchi,
                       SolverOptions options) {
  return Jacobian(ops, chi, fields, options).apply(dchi);
}

CVector jacobian_adjoint_apply(const Operators& ops, const ContrastMap& chi, const FieldSet& fields,
                               const CMatrix& residual, SolverOptions options) {
  return Jacobian(ops, chi, fields, options).adjoint_apply(residual);
}

// ---------------------------------------------------------------------------
// Proximal distorted Born

namespace {

void check_measurements(const Operators& ops, const CMatrix& meas, const char* who) {
  if (meas.rows() != ops.n_tx() || meas.cols() != ops.n_rx()) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(ops.n_tx()) + " x " +
                     std::to_string(ops.n_rx()) + " measurements");
  }
}

double l1_norm(const CVector& x) {
  double s = 0.0;
  for (const Complex& z : x) s += std::abs(z);
  return s;
}

// CG on (J^H J + eps I) s = b, started from zero.
CVector normal_equations_cg(const Jacobian& jac, const CVector& b, double eps, int max_iters, double tol) {
  CVector x = CVector::Zero(b.size());
  CVector r = b;
  CVector p = r;
  double rs = r.squaredNorm();
  const double stop = tol * std::sqrt(rs);
  if (rs == 0.0) return x;
  for (int k = 0; k < max_iters; ++k) {
    CVector hp = jac.adjoint_apply(jac.apply(p));
    if (eps > 0.0) hp += eps * p;
    const double curv = p.dot(hp).real();
    if (!(curv > 0.0)) break;
    const double alpha = rs / curv;
    x += alpha * p;
    r -= alpha * hp;
    const double rs_new = r.squaredNorm();
    if (std::sqrt(rs_new) <= stop) break;
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

}  // namespace

InversionResult dbim_prox_solve(const Operators& ops, const CMatrix& measurements, const ContrastMap& init,
                                const InversionConfig& config) {
  config.validate();
  check_measurements(ops, measurements, "dbim_prox_solve");
  if (!(init.grid == ops.grid) || init.chi.size() != ops.pixels()) {
    throw ShapeError("dbim_prox_solve: initial contrast does not match the operator grid");
  }
  const double meas_norm = measurements.norm();
  const double scale = meas_norm > 0.0 ? 1.0 / meas_norm : 1.0;

  InversionTrace trace;
  ContrastMap chi = init;
  auto forward = [&](const ContrastMap& c) {
    try {
      return solve_fields(ops, c, config.solver);
    } catch (const Error& e) {
      throw InversionError(std::string("dbim_prox_solve: forward solve failed: ") + e.what(), trace);
    }
  };
  auto objective = [&](const CMatrix& resid, const CVector& c) {
    return resid.squaredNorm() +
           config.threshold_tau * l1_norm(transform_forward(config.transform, ops.grid, c));
  };

  FieldSet fields = forward(chi);
  CMatrix resid = measurements - fields.e_sca.transpose();
  double prev = resid.norm() * scale;
  trace.initial_data_residual = prev;
  trace.initial_objective = objective(resid, chi.chi);

  for (int it = 1; it <= config.max_iters; ++it) {
    CVector step;
    try {
      const Jacobian jac(ops, chi, std::move(fields), config.solver);
      step = normal_equations_cg(jac, jac.adjoint_apply(resid), config.tikhonov_eps, config.cg_iters, config.cg_tol);
    } catch (const Error& e) {
      throw InversionError(std::string("dbim_prox_solve: linearized solve failed: ") + e.what(), trace);
    }
    CVector coeffs = transform_forward(config.transform, ops.grid, chi.chi + step);
    for (Complex& z : coeffs) z = soft_threshold(z, config.threshold_tau);
    chi.chi = transform_adjoint(config.transform, ops.grid, coeffs);

    fields = forward(chi);
    resid = measurements - fields.e_sca.transpose();
    const double cur = resid.norm() * scale;
    TraceEntry entry{it, cur, objective(resid, chi.chi), std::nullopt};
    if (config.keep_snapshots) entry.snapshot = chi;
    trace.entries.push_back(std::move(entry));

    if (prev == 0.0 || prev - cur < config.min_relative_improvement * prev) break;
    prev = cur;
  }
  return {chi, std::move(trace)};
}

// ---------------------------------------------------------------------------
// Contrast source inversion

InversionResult csi_solve(const Operators& ops, const CMatrix& measurements, const InversionConfig& config,
                          const std::optional<CsiStart>& start) {
  config.validate();
  check_measurements(ops, measurements, "csi_solve");
  const int P = ops.pixels();
  const int N = ops.n_tx();

  CVector chi;
  CMatrix w;
  if (start) {
    if (!(start->chi.grid == ops.grid) || start->chi.chi.size() != P || start->sources.rows() != P ||
        start->sources.cols() != N) {
      throw ShapeError("csi_solve: starting point does not match the operators");
    }
    chi = start->chi.chi;
    w = start->sources;
  } else {
    BackpropResult bp = backpropagate_sources(ops, measurements);
    chi = std::move(bp.chi.chi);
    w = std::move(bp.sources);
  }

  InversionTrace trace;
  const CMatrix f = measurements.transpose();  // M x N, column per transmitter
  const double data_energy = f.squaredNorm();
  const double eta_s = data_energy > 0.0 ? 1.0 / data_energy : 1.0;
  double obj_energy = 0.0;
  for (int n = 0; n < N; ++n) obj_energy += chi.cwiseProduct(ops.e_inc.col(n)).squaredNorm();
  if (!(obj_energy > 0.0)) {
    obj_energy = 1e-12 * std::max(ops.e_inc.squaredNorm(), 1e-300);
    trace.normalizer_regularized = true;
  }
  const double eta_d = 1.0 / obj_energy;
  const double data_scale = data_energy > 0.0 ? 1.0 / std::sqrt(data_energy) : 1.0;

  // Data and object residuals at (w, chi).
  CMatrix rho, r, fields;
  auto residuals = [&] {
    rho = f - ops.gd * w;
    r = fields.array().colwise() * chi.array();
    r -= w;
  };
  // Pixel-wise least-squares contrast for the current sources and fields.
  auto update_contrast = [&] {
    CVector num = CVector::Zero(P);
    Eigen::VectorXd den = Eigen::VectorXd::Zero(P);
    for (int n = 0; n < N; ++n) {
      num += w.col(n).cwiseProduct(fields.col(n).conjugate());
      den += fields.col(n).cwiseAbs2();
    }
    for (int p = 0; p < P; ++p) chi[p] = den[p] > 0.0 ? num[p] / den[p] : Complex(0.0);
  };
  auto cost = [&] { return eta_s * rho.squaredNorm() + eta_d * r.squaredNorm(); };

  fields = ops.e_inc + ops.gs * w;
  residuals();
  trace.initial_data_residual = rho.norm() * data_scale;
  trace.initial_objective = cost();

  CMatrix g_prev, v;
  double g_prev_energy = 0.0;
  for (int it = 1; it <= config.max_iters; ++it) {
    // Gradient of F with respect to conj(w).
    const CMatrix chi_r = r.array().colwise() * chi.conjugate().array();
    CMatrix g = -eta_s * (ops.gd.adjoint() * rho) - eta_d * (r - ops.gs.adjoint() * chi_r);

    if (it == 1 || g_prev_energy == 0.0) {
      v = g;
    } else {
      const double beta = (g.cwiseProduct((g - g_prev).conjugate())).sum().real() / g_prev_energy;
      v = g + beta * v;
    }

    const CMatrix gd_v = ops.gd * v;
    const CMatrix lv = (ops.gs * v).array().colwise() * chi.array() - v.array();
    const double curv = eta_s * gd_v.squaredNorm() + eta_d * lv.squaredNorm();
    const double slope = (g.conjugate().cwiseProduct(v)).sum().real();
    const double alpha = curv > 0.0 ? -slope / curv : 0.0;
    w += alpha * v;

    g_prev_energy = g.squaredNorm();
    g_prev = std::move(g);

    fields = ops.e_inc + ops.gs * w;
    update_contrast();
    residuals();
    TraceEntry entry{it, rho.norm() * data_scale, cost(), std::nullopt};
    if (config.keep_snapshots) entry.snapshot = ContrastMap(ops.grid, chi);
    trace.entries.push_back(std::move(entry));
  }
  return {ContrastMap(ops.grid, chi), std::move(trace)};
}

}  // namespace nis
