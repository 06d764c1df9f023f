#pragma once

#include "nis/core.hpp"

namespace nis {

enum class BesselKind { J, Y };

/// Cylindrical Bessel function of the first (J) or second (Y) kind, order 0 or 1.
///
/// Ascending power series below x = 12 and the Hankel asymptotic expansion
/// above it; absolute error stays below 1e-9 on (0, 50].
/// Throws DomainError for Y with x <= 0, any kind with x < 0, or order > 1.
double bessel_cyl(BesselKind kind, int order, double x);

/// H_n^(1)(x) = J_n(x) + i Y_n(x) for n in {0, 1}; x > 0.
Complex hankel1(int order, double x);

}  // namespace nis
