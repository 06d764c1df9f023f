#include "nis/linimg.hpp"

#include <algorithm>
#include <string>

#include "nis/parallel.hpp"

namespace nis {

CVector contrast_from_sources(const Operators& ops, const CMatrix& sources) {
  const int P = ops.pixels();
  const int N = ops.n_tx();
  if (sources.rows() != P || sources.cols() != N) throw ShapeError("contrast_from_sources: sources must be P x N");
  const CMatrix fields = ops.e_inc + ops.gs * sources;
  CVector num = CVector::Zero(P);
  Eigen::VectorXd den = Eigen::VectorXd::Zero(P);
  for (int n = 0; n < N; ++n) {
    num += sources.col(n).cwiseProduct(fields.col(n).conjugate());
    den += fields.col(n).cwiseAbs2();
  }
  CVector chi(P);
  for (int p = 0; p < P; ++p) chi[p] = den[p] > 0.0 ? num[p] / den[p] : Complex(0.0);
  return chi;
}

BackpropResult backpropagate_sources(const Operators& ops, const CMatrix& measurements) {
  const int N = ops.n_tx();
  const int M = ops.n_rx();
  if (measurements.rows() != N || measurements.cols() != M) {
    throw ShapeError("backpropagate: expected " + std::to_string(N) + " x " + std::to_string(M) +
                     " measurements, got " + std::to_string(measurements.rows()) + " x " +
                     std::to_string(measurements.cols()));
  }
  CMatrix sources(ops.pixels(), N);
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t n) {
    const CVector f = measurements.row(n).transpose();
    const CVector back = ops.gd.adjoint() * f;
    const CVector forward = ops.gd * back;
    const double denom = forward.squaredNorm();
    const double gamma = denom > 0.0 ? back.squaredNorm() / denom : 0.0;
    sources.col(n) = gamma * back;
  });
  return {ContrastMap(ops.grid, contrast_from_sources(ops, sources)), sources};
}

ContrastMap backpropagate(const Operators& ops, const CMatrix& measurements) {
  return backpropagate_sources(ops, measurements).chi;
}

RealImage normalize_for_display(const ContrastMap& chi) {
  RealImage img(chi.grid.nx(), chi.grid.ny());
  double peak = 0.0;
  for (int p = 0; p < chi.grid.size(); ++p) {
    img.pixels[p] = std::max(0.0, chi.chi[p].real());
    peak = std::max(peak, img.pixels[p]);
  }
  if (peak > 0.0) {
    for (double& v : img.pixels) v /= peak;
  }
  return img;
}

}  // namespace nis
