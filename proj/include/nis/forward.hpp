#pragma once

#include <cstdint>
#include <string>

#include "nis/core.hpp"
#include "nis/geometry.hpp"

namespace nis {

enum class Incidence { LineSource, PlaneWave };

/// Discretized Green's operators for one grid and antenna layout.
///
/// Richmond's equal-area disk discretization: every cell is replaced by a
/// disk of radius a = cell_size / sqrt(pi), which makes the cell integral of
/// the 2D Green's function analytic. Both matrices already include the k0^2
/// factor of the scattering integral.
struct Operators {
  Grid grid;
  MeasurementSetup setup;
  Incidence incidence = Incidence::LineSource;
  CMatrix gd;     // M x P, contrast sources -> receivers
  CMatrix gs;     // P x P, contrast sources -> domain (symmetric)
  CMatrix e_inc;  // P x N, one incident field per transmitter

  int pixels() const { return grid.size(); }
  int n_tx() const { return setup.n_tx(); }
  int n_rx() const { return setup.n_rx(); }
};

Operators assemble(const Grid& grid, const MeasurementSetup& setup,
                   Incidence incidence = Incidence::LineSource);

/// P x N incident fields. Line source: (i/4) H0(k0 |r - r_tx|). Plane wave:
/// unit amplitude travelling from the transmitter toward the grid center,
/// phase referenced at the center.
CMatrix incident_fields(const Grid& grid, const MeasurementSetup& setup,
                        Incidence incidence = Incidence::LineSource);

enum class SolverMethod { Auto, Krylov, Dense };

struct SolverOptions {
  /// Auto: dense LU up to kDenseLimit unknowns, BiCGSTAB above.
  SolverMethod method = SolverMethod::Auto;
  double tolerance = 1e-10;
  /// 0 selects 10 * P.
  int max_iterations = 0;
  /// Krylov only: retry with dense LU after non-convergence when P <= kDenseLimit.
  bool dense_fallback = true;

  static constexpr int kDenseLimit = 4096;
};

/// Solver for A e = b with A = I - Gs diag(chi), and for A^H e = b.
///
/// The dense path factorizes once and is reused across right-hand sides;
/// solve() and solve_adjoint() are const and safe to call concurrently.
class TotalFieldSolver {
 public:
  TotalFieldSolver(const Operators& ops, const CVector& chi, SolverOptions options = {});

  CVector solve(const CVector& rhs) const;
  CVector solve_adjoint(const CVector& rhs) const;
  /// Column-wise solves. Dense factorizations use one blocked back-substitution;
  /// errors name the offending column as "<label> j".
  CMatrix solve_columns(const CMatrix& rhs, const std::string& label = "column") const;
  CMatrix solve_adjoint_columns(const CMatrix& rhs, const std::string& label = "column") const;

  CVector apply(const CVector& x) const;
  CVector apply_adjoint(const CVector& x) const;

  bool is_dense() const { return dense_; }

 private:
  CVector solve_impl(const CVector& rhs, bool adjoint) const;
  CMatrix solve_columns_impl(const CMatrix& rhs, bool adjoint, const std::string& label) const;
  CVector bicgstab(const CVector& rhs, bool adjoint) const;

  const Operators* ops_;
  CVector chi_;
  SolverOptions options_;
  bool dense_ = false;
  Eigen::PartialPivLU<CMatrix> lu_;
};

/// Total field for one incident vector; relative residual <= options.tolerance.
CVector solve_total_field(const Operators& ops, const ContrastMap& chi, const CVector& e_inc,
                          SolverOptions options = {});

/// Gd (chi .* e_tot).
CVector scattered_field(const Operators& ops, const ContrastMap& chi, const CVector& e_tot);

struct FieldSet {
  CMatrix e_inc;  // P x N
  CMatrix e_tot;  // P x N
  CMatrix e_sca;  // M x N
};

/// Solves every transmitter; NonConvergence messages name the transmitter.
FieldSet solve_fields(const Operators& ops, const ContrastMap& chi, SolverOptions options = {});
FieldSet solve_fields(const Operators& ops, const ContrastMap& chi, const TotalFieldSolver& solver);

/// N x M measurement matrix (row n = transmitter n).
CMatrix simulate(const Operators& ops, const ContrastMap& chi, SolverOptions options = {});
CMatrix simulate(const Grid& grid, const MeasurementSetup& setup, const ContrastMap& chi,
                 SolverOptions options = {});

/// Adds circular complex Gaussian noise whose total power is the total signal
/// power times 10^(-snr_db/10). snr_db = +inf returns the input unchanged.
CMatrix add_noise(const CMatrix& measurements, double snr_db, std::uint64_t seed);

/// Series solution for TM scattering by a homogeneous circular cylinder
/// centered on the grid center. Returns N x M scattered fields with the same
/// amplitude convention as simulate().
CMatrix analytic_cylinder(double radius, double eps_r, const Grid& grid, const MeasurementSetup& setup,
                          int n_terms, Incidence incidence = Incidence::LineSource);

/// Frobenius relative difference ||a - b|| / ||b||.
double relative_l2(const CMatrix& a, const CMatrix& b);

}  // namespace nis
