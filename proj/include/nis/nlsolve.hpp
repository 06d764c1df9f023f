#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nis/forward.hpp"

namespace nis {

/// Complex magnitude shrinkage: z max(|z| - tau, 0) / |z|, phase preserved.
Complex soft_threshold(Complex z, double tau);

enum class SparseTransform { Identity, Haar };

/// Orthonormal sparsifying transform D on grid images. Haar recurses on the
/// low-pass quadrant while both sides stay even, so D^H D = I for any shape.
CVector transform_forward(SparseTransform kind, const Grid& grid, const CVector& x);
CVector transform_adjoint(SparseTransform kind, const Grid& grid, const CVector& x);

struct InversionConfig {
  int max_iters = 10;
  double threshold_tau = 0.0;
  int cg_iters = 20;
  double cg_tol = 1e-6;
  double tikhonov_eps = 0.0;
  SparseTransform transform = SparseTransform::Identity;
  /// Proximal Gauss-Newton stops once the data residual improves by less than this fraction.
  double min_relative_improvement = 1e-4;
  bool keep_snapshots = false;
  SolverOptions solver;

  void validate() const;
};

struct TraceEntry {
  int iteration = 0;
  double data_residual = 0.0;  // ||measured - predicted|| / ||measured||
  double objective = 0.0;
  std::optional<ContrastMap> snapshot;
};

struct InversionTrace {
  double initial_data_residual = 0.0;
  double initial_objective = 0.0;
  /// Set when the CSI object-equation normalizer was zero and had to be regularized.
  bool normalizer_regularized = false;
  std::vector<TraceEntry> entries;

  std::size_t size() const { return entries.size(); }
  /// Columns: iteration,data_residual,objective.
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

/// Thrown when a forward solve fails mid-inversion; carries the trace so far.
class InversionError : public Error {
 public:
  InversionError(const std::string& what, InversionTrace trace) : Error(what), trace_(std::move(trace)) {}
  const InversionTrace& trace() const { return trace_; }

 private:
  InversionTrace trace_;
};

struct InversionResult {
  ContrastMap chi;
  InversionTrace trace;
};

/// Linearization of the scattered field around a contrast.
///
/// J^(n) = Gd (diag(e_tot) + diag(chi) (I - Gs diag(chi))^-1 Gs diag(e_tot));
/// the inner inverse is applied through TotalFieldSolver and never formed.
class Jacobian {
 public:
  Jacobian(const Operators& ops, const ContrastMap& chi, SolverOptions options = {});
  Jacobian(const Operators& ops, const ContrastMap& chi, FieldSet fields, SolverOptions options = {});

  const FieldSet& fields() const { return fields_; }
  /// Predicted measurements at the linearization point (N x M).
  CMatrix predicted() const { return fields_.e_sca.transpose(); }

  /// N x M response to a contrast perturbation.
  CMatrix apply(const CVector& dchi) const;
  /// Exact adjoint of apply() under <a, b> = sum conj(a) b.
  CVector adjoint_apply(const CMatrix& residual) const;

 private:
  const Operators* ops_;
  CVector chi_;
  TotalFieldSolver solver_;
  FieldSet fields_;
};

CMatrix jacobian_apply(const Operators& ops, const ContrastMap& chi, const FieldSet& fields, const CVector& dchi,
                       SolverOptions options = {});
CVector jacobian_adjoint_apply(const Operators& ops, const ContrastMap& chi, const FieldSet& fields,
                               const CMatrix& residual, SolverOptions options = {});

/// Proximal distorted-Born (Gauss-Newton) iteration with a soft-threshold prox.
///
/// Each outer step solves (sum J^H J + eps I) s = sum J^H dE by conjugate
/// gradients and sets chi <- D^H S(D (chi + s), tau).
InversionResult dbim_prox_solve(const Operators& ops, const CMatrix& measurements, const ContrastMap& init,
                                const InversionConfig& config);

struct CsiStart {
  ContrastMap chi;
  CMatrix sources;  // P x N
};

/// Contrast source inversion. Contrast sources take one Polak-Ribiere CG step
/// with exact line search per iteration, then the contrast is the pixel-wise
/// least-squares fit to the sources. The object-equation normalizer is fixed
/// from the starting contrast so the recorded cost is non-increasing.
/// Runs exactly config.max_iters iterations.
InversionResult csi_solve(const Operators& ops, const CMatrix& measurements, const InversionConfig& config,
                          const std::optional<CsiStart>& start = std::nullopt);

}  // namespace nis
