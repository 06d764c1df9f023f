#include "nis/forward.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nis/parallel.hpp"
#include "nis/rng.hpp"
#include "nis/specfun.hpp"

namespace nis {

namespace {

constexpr Complex kI{0.0, 1.0};

double norm_or_zero(const CVector& v) { return v.size() == 0 ? 0.0 : v.norm(); }

}  // namespace

CMatrix incident_fields(const Grid& grid, const MeasurementSetup& setup, Incidence incidence) {
  const int P = grid.size();
  const int N = setup.n_tx();
  const double k0 = grid.k0();
  const Point c = grid.center();
  CMatrix e(P, N);
  for (int n = 0; n < N; ++n) {
    const Point tx = setup.tx[n];
    if (incidence == Incidence::LineSource) {
      for (int p = 0; p < P; ++p) {
        const double d = distance(grid.pixel_center(p), tx);
        if (!(d > 0.0)) throw ConfigError("transmitter " + std::to_string(n) + " coincides with a pixel center");
        e(p, n) = 0.25 * kI * hankel1(0, k0 * d);
      }
    } else {
      const double len = distance(tx, c);
      if (!(len > 0.0)) throw ConfigError("plane wave transmitter at the grid center has no direction");
      const double dx = (c.x - tx.x) / len;
      const double dy = (c.y - tx.y) / len;
      for (int p = 0; p < P; ++p) {
        const Point r = grid.pixel_center(p);
        e(p, n) = std::exp(kI * (k0 * (dx * (r.x - c.x) + dy * (r.y - c.y))));
      }
    }
  }
  return e;
}

Operators assemble(const Grid& grid, const MeasurementSetup& setup, Incidence incidence) {
  validate_pairing(grid, setup);
  const int P = grid.size();
  const int M = setup.n_rx();
  const double k0 = grid.k0();
  const double ka = k0 * grid.equivalent_radius();
  const Complex coupling = kI * (kPi * ka / 2.0);
  const Complex far_weight = coupling * bessel_cyl(BesselKind::J, 1, ka);
  const Complex self_term = coupling * hankel1(1, ka) - 1.0;

  Operators ops{grid, setup, incidence, CMatrix(M, P), CMatrix(P, P), CMatrix()};

  // Gs depends only on |d_row|, |d_col|: tabulate once.
  const int nx = grid.nx();
  const int ny = grid.ny();
  std::vector<Complex> table(static_cast<std::size_t>(nx) * ny);
  for (int dr = 0; dr < ny; ++dr) {
    for (int dc = 0; dc < nx; ++dc) {
      table[dr * nx + dc] = (dr == 0 && dc == 0)
                                ? self_term
                                : far_weight * hankel1(0, k0 * grid.cell_size() * std::hypot(dr, dc));
    }
  }
  for (int q = 0; q < P; ++q) {
    for (int p = 0; p < P; ++p) {
      const int dr = std::abs(grid.row(p) - grid.row(q));
      const int dc = std::abs(grid.col(p) - grid.col(q));
      ops.gs(p, q) = table[dr * nx + dc];
    }
  }

  const double min_sep = 1e-12 * grid.cell_size();
  for (int m = 0; m < M; ++m) {
    for (int q = 0; q < P; ++q) {
      const double d = distance(setup.rx[m], grid.pixel_center(q));
      if (d < min_sep) throw ConfigError("receiver " + std::to_string(m) + " coincides with a pixel center");
      ops.gd(m, q) = far_weight * hankel1(0, k0 * d);
    }
  }
  ops.e_inc = incident_fields(grid, setup, incidence);
  return ops;
}

TotalFieldSolver::TotalFieldSolver(const Operators& ops, const CVector& chi, SolverOptions options)
    : ops_(&ops), chi_(chi), options_(options) {
  const int P = ops.pixels();
  if (chi.size() != P) throw ShapeError("TotalFieldSolver: contrast length does not match grid");
  if (!(options_.tolerance > 0.0)) throw ConfigError("TotalFieldSolver: tolerance must be positive");
  if (options_.max_iterations <= 0) options_.max_iterations = 10 * P;
  dense_ = options_.method == SolverMethod::Dense ||
           (options_.method == SolverMethod::Auto && P <= SolverOptions::kDenseLimit);
  if (dense_) {
    CMatrix a = -(ops.gs * chi_.asDiagonal());
    a.diagonal().array() += 1.0;
    lu_.compute(a);
  }
}

CVector TotalFieldSolver::apply(const CVector& x) const {
  return x - ops_->gs * (chi_.cwiseProduct(x));
}

CVector TotalFieldSolver::apply_adjoint(const CVector& x) const {
  return x - chi_.conjugate().cwiseProduct(ops_->gs.adjoint() * x);
}

CVector TotalFieldSolver::solve(const CVector& rhs) const { return solve_impl(rhs, false); }

CVector TotalFieldSolver::solve_adjoint(const CVector& rhs) const { return solve_impl(rhs, true); }

CVector TotalFieldSolver::solve_impl(const CVector& rhs, bool adjoint) const {
  if (rhs.size() != chi_.size()) throw ShapeError("TotalFieldSolver: right-hand side has wrong length");
  const double bnorm = norm_or_zero(rhs);
  if (bnorm == 0.0) return CVector::Zero(rhs.size());
  if (chi_.isZero(0.0)) return rhs;
  if (!dense_) {
    try {
      return bicgstab(rhs, adjoint);
    } catch (const NonConvergence&) {
      if (!options_.dense_fallback || chi_.size() > SolverOptions::kDenseLimit) throw;
    }
    TotalFieldSolver fallback(*ops_, chi_, SolverOptions{SolverMethod::Dense, options_.tolerance,
                                                         options_.max_iterations, false});
    return fallback.solve_impl(rhs, adjoint);
  }
  CVector x = adjoint ? CVector(lu_.adjoint().solve(rhs)) : CVector(lu_.solve(rhs));
  // One step of iterative refinement when the factorization alone misses the tolerance.
  for (int pass = 0; pass < 2; ++pass) {
    const CVector r = rhs - (adjoint ? apply_adjoint(x) : apply(x));
    const double rel = r.norm() / bnorm;
    if (rel <= options_.tolerance) return x;
    if (pass == 1) throw NonConvergence("dense solve residual above tolerance", rel);
    x += adjoint ? CVector(lu_.adjoint().solve(r)) : CVector(lu_.solve(r));
  }
  return x;
}

CMatrix TotalFieldSolver::solve_columns(const CMatrix& rhs, const std::string& label) const {
  return solve_columns_impl(rhs, false, label);
}

CMatrix TotalFieldSolver::solve_adjoint_columns(const CMatrix& rhs, const std::string& label) const {
  return solve_columns_impl(rhs, true, label);
}

CMatrix TotalFieldSolver::solve_columns_impl(const CMatrix& rhs, bool adjoint, const std::string& label) const {
  if (rhs.rows() != chi_.size()) throw ShapeError("TotalFieldSolver: right-hand side has wrong length");
  const auto cols = static_cast<std::size_t>(rhs.cols());
  auto tagged = [&](std::size_t j, const NonConvergence& e) {
    return NonConvergence(label + " " + std::to_string(j) + ": " + e.what(), e.residual());
  };
  CMatrix x(rhs.rows(), rhs.cols());
  if (!dense_ || chi_.isZero(0.0)) {
    parallel_for(cols, [&](std::size_t j) {
      try {
        x.col(j) = solve_impl(rhs.col(j), adjoint);
      } catch (const NonConvergence& e) {
        throw tagged(j, e);
      }
    });
    return x;
  }
  auto residual = [&](const CMatrix& y) -> CMatrix {
    if (adjoint) return rhs - (y - chi_.conjugate().asDiagonal() * (ops_->gs.adjoint() * y));
    return rhs - (y - ops_->gs * (chi_.asDiagonal() * y));
  };
  x = adjoint ? CMatrix(lu_.adjoint().solve(rhs)) : CMatrix(lu_.solve(rhs));
  for (int pass = 0; pass < 2; ++pass) {
    const CMatrix r = residual(x);
    bool ok = true;
    for (std::size_t j = 0; j < cols; ++j) {
      const double bnorm = rhs.col(j).norm();
      const double rel = bnorm > 0.0 ? r.col(j).norm() / bnorm : 0.0;
      if (rel > options_.tolerance) {
        if (pass == 1) throw tagged(j, NonConvergence("dense solve residual above tolerance", rel));
        ok = false;
      }
    }
    if (ok) return x;
    x += adjoint ? CMatrix(lu_.adjoint().solve(r)) : CMatrix(lu_.solve(r));
  }
  return x;
}

CVector TotalFieldSolver::bicgstab(const CVector& b, bool adjoint) const {
  auto A = [&](const CVector& v) { return adjoint ? apply_adjoint(v) : apply(v); };
  const double bnorm = b.norm();
  const double tol = options_.tolerance;
  CVector x = CVector::Zero(b.size());
  CVector r = b;
  double rel = 1.0;
  int iter = 0;
  // Restart loop: the recursive residual can drift from the true one.
  while (iter < options_.max_iterations) {
    CVector r_hat = r;
    Complex rho = 1.0, alpha = 1.0, omega = 1.0;
    CVector v = CVector::Zero(b.size());
    CVector p = CVector::Zero(b.size());
    bool restart = false;
    while (iter < options_.max_iterations) {
      ++iter;
      const Complex rho_new = r_hat.dot(r);
      if (std::abs(rho_new) < 1e-300) {
        restart = true;
        break;
      }
      const Complex beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      p = r + beta * (p - omega * v);
      v = A(p);
      const Complex denom = r_hat.dot(v);
      if (std::abs(denom) < 1e-300) {
        restart = true;
        break;
      }
      alpha = rho / denom;
      CVector s = r - alpha * v;
      if (s.norm() / bnorm <= tol) {
        x += alpha * p;
        r = s;
        break;
      }
      const CVector t = A(s);
      const double tt = t.squaredNorm();
      omega = tt > 0.0 ? t.dot(s) / tt : Complex(0.0);
      x += alpha * p + omega * s;
      r = s - omega * t;
      if (r.norm() / bnorm <= tol) break;
      if (std::abs(omega) < 1e-300) {
        restart = true;
        break;
      }
    }
    r = b - A(x);
    rel = r.norm() / bnorm;
    if (rel <= tol) return x;
    (void)restart;
  }
  throw NonConvergence("BiCGSTAB reached " + std::to_string(options_.max_iterations) +
                           " iterations with relative residual " + std::to_string(rel),
                       rel);
}

CVector solve_total_field(const Operators& ops, const ContrastMap& chi, const CVector& e_inc,
                          SolverOptions options) {
  if (chi.chi.size() != ops.pixels() || e_inc.size() != ops.pixels()) {
    throw ShapeError("solve_total_field: contrast or incident field does not match the grid");
  }
  return TotalFieldSolver(ops, chi.chi, options).solve(e_inc);
}

CVector scattered_field(const Operators& ops, const ContrastMap& chi, const CVector& e_tot) {
  if (chi.chi.size() != ops.pixels() || e_tot.size() != ops.pixels()) {
    throw ShapeError("scattered_field: contrast or total field does not match the grid");
  }
  return ops.gd * chi.chi.cwiseProduct(e_tot);
}

FieldSet solve_fields(const Operators& ops, const ContrastMap& chi, const TotalFieldSolver& solver) {
  if (chi.chi.size() != ops.pixels()) throw ShapeError("solve_fields: contrast does not match the grid");
  FieldSet fields{ops.e_inc, solver.solve_columns(ops.e_inc, "transmitter"), CMatrix()};
  fields.e_sca = ops.gd * (chi.chi.asDiagonal() * fields.e_tot);
  return fields;
}

FieldSet solve_fields(const Operators& ops, const ContrastMap& chi, SolverOptions options) {
  if (chi.chi.size() != ops.pixels()) throw ShapeError("solve_fields: contrast does not match the grid");
  const TotalFieldSolver solver(ops, chi.chi, options);
  return solve_fields(ops, chi, solver);
}

CMatrix simulate(const Operators& ops, const ContrastMap& chi, SolverOptions options) {
  return solve_fields(ops, chi, options).e_sca.transpose();
}

CMatrix simulate(const Grid& grid, const MeasurementSetup& setup, const ContrastMap& chi,
                 SolverOptions options) {
  return simulate(assemble(grid, setup), chi, options);
}

CMatrix add_noise(const CMatrix& measurements, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ConfigError("add_noise: snr_db must be finite or +inf");
  }
  if (std::isinf(snr_db)) return measurements;
  const double count = static_cast<double>(measurements.size());
  if (count == 0.0) return measurements;
  const double noise_power = measurements.squaredNorm() * std::pow(10.0, -snr_db / 10.0);
  const double sigma = std::sqrt(noise_power / count / 2.0);  // per real component
  const CounterRng rng(seed, 0x6e6f697365ULL);
  CMatrix noisy = measurements;
  for (Eigen::Index i = 0; i < noisy.size(); ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    noisy(i) += Complex(sigma * rng.normal(2 * k), sigma * rng.normal(2 * k + 1));
  }
  return noisy;
}

namespace {

struct CylTerms {
  Complex j0, dj0, h0, dh0;  // background J_n, J_n', H_n, H_n' at k0 R
  double j1, dj1;            // interior J_n, J_n' at k1 R
};

double jn(int n, double x) { return std::cyl_bessel_j(static_cast<double>(std::abs(n)), x); }
double yn(int n, double x) { return std::cyl_neumann(static_cast<double>(std::abs(n)), x); }
Complex hn(int n, double x) { return {jn(n, x), yn(n, x)}; }

double djn(int n, double x) {
  if (n == 0) return -jn(1, x);
  return 0.5 * (jn(n - 1, x) - jn(n + 1, x));
}
Complex dhn(int n, double x) {
  if (n == 0) return -hn(1, x);
  return 0.5 * (hn(n - 1, x) - hn(n + 1, x));
}

// Ratio of scattered to incident coefficient for cylindrical harmonic n.
Complex mie_ratio(int n, double k0, double k1, double radius) {
  const double x0 = k0 * radius;
  const double x1 = k1 * radius;
  const double num = k1 * djn(n, x1) * jn(n, x0) - k0 * jn(n, x1) * djn(n, x0);
  const Complex den = k0 * jn(n, x1) * dhn(n, x0) - k1 * djn(n, x1) * hn(n, x0);
  return num / den;
}

}  // namespace

CMatrix analytic_cylinder(double radius, double eps_r, const Grid& grid, const MeasurementSetup& setup,
                          int n_terms, Incidence incidence) {
  if (!(radius > 0.0)) throw ConfigError("analytic_cylinder: radius must be positive");
  if (!(eps_r > 0.0)) throw ConfigError("analytic_cylinder: eps_r must be positive");
  if (n_terms < 1) throw ConfigError("analytic_cylinder: need at least one term");
  validate_pairing(grid, setup);
  const double k0 = grid.k0();
  const double k1 = k0 * std::sqrt(eps_r);
  const Point c = grid.center();
  const int N = setup.n_tx();
  const int M = setup.n_rx();
  CMatrix out = CMatrix::Zero(N, M);
  if (eps_r == 1.0) return out;

  std::vector<Complex> ratio(n_terms + 1);
  for (int n = 0; n <= n_terms; ++n) ratio[n] = mie_ratio(n, k0, k1, radius);

  constexpr double kTailTolerance = 1e-10;
  for (int t = 0; t < N; ++t) {
    const double rho_t = distance(setup.tx[t], c);
    const double phi_t = std::atan2(setup.tx[t].y - c.y, setup.tx[t].x - c.x);
    if (rho_t <= radius) throw ConfigError("analytic_cylinder: transmitter inside the cylinder");
    for (int m = 0; m < M; ++m) {
      const double rho_r = distance(setup.rx[m], c);
      const double phi_r = std::atan2(setup.rx[m].y - c.y, setup.rx[m].x - c.x);
      if (rho_r <= radius) throw ConfigError("analytic_cylinder: receiver inside the cylinder");
      Complex sum = 0.0;
      double tail = 0.0;
      for (int n = 0; n <= n_terms; ++n) {
        Complex term;
        if (incidence == Incidence::LineSource) {
          // (i/4) H0(k0|r - r_t|) = (i/4) sum_n J_n(k0 rho) H_n(k0 rho_t) e^{in(phi - phi_t)}
          term = 0.25 * kI * ratio[n] * hn(n, k0 * rho_t) * hn(n, k0 * rho_r) *
                 std::cos(n * (phi_r - phi_t));
        } else {
          // exp(i k0 d.(r - c)) with d pointing from the transmitter to the center.
          const double phi_inc = phi_t + kPi;
          term = std::pow(kI, n) * ratio[n] * hn(n, k0 * rho_r) * std::cos(n * (phi_r - phi_inc));
        }
        if (n > 0) term *= 2.0;
        sum += term;
        if (n > n_terms - 3) tail = std::max(tail, std::abs(term));
      }
      if (tail > kTailTolerance * std::abs(sum) && tail > 1e-300) {
        throw NonConvergence("analytic_cylinder: series not converged after " + std::to_string(n_terms) +
                                 " terms",
                             tail / std::abs(sum));
      }
      out(t, m) = sum;
    }
  }
  return out;
}

double relative_l2(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative_l2: shape mismatch");
  const double denom = b.norm();
  return denom == 0.0 ? (a - b).norm() : (a - b).norm() / denom;
}

}  // namespace nis
