#pragma once

#include "nis/forward.hpp"
#include "nis/image.hpp"

namespace nis {

struct BackpropResult {
  ContrastMap chi;
  CMatrix sources;  // P x N contrast sources w
};

/// Back-propagation image from N x M measurements.
///
/// Per transmitter the contrast source is the scaled adjoint image
/// w = gamma Gd^H f, with gamma minimizing ||f - gamma Gd Gd^H f||. The
/// contrast then follows from w and the fields E = e_inc + Gs w by a
/// pixel-wise least-squares fit over all transmitters.
BackpropResult backpropagate_sources(const Operators& ops, const CMatrix& measurements);

ContrastMap backpropagate(const Operators& ops, const CMatrix& measurements);

/// Least-squares contrast from contrast sources: sum w conj(E) / sum |E|^2,
/// E = e_inc + Gs w. Pixels with zero field energy get zero.
CVector contrast_from_sources(const Operators& ops, const CMatrix& sources);

/// re(chi) clamped at zero and divided by its maximum; all-zero stays zero.
RealImage normalize_for_display(const ContrastMap& chi);

}  // namespace nis
