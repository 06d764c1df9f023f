#include "nis/specfun.hpp"

#include <cmath>
#include <string>

namespace nis {

namespace {

constexpr double kEulerGamma = 0.57721566490153286061;
constexpr double kSeriesLimit = 12.0;

// J_n by the ascending series: (x/2)^n sum (-x^2/4)^k / (k! (k+n)!).
double series_j(int n, double x) {
  const double q = -0.25 * x * x;
  double term = (n == 0) ? 1.0 : 0.5 * x;
  double sum = term;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k + n));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum) && k > 2) break;
  }
  return sum;
}

double series_y(int n, double x) {
  const double q = -0.25 * x * x;
  const double log_part = (2.0 / kPi) * (std::log(0.5 * x) + kEulerGamma);
  if (n == 0) {
    // (2/pi) sum_{k>=1} (-1)^{k+1} H_k (x^2/4)^k / (k!)^2
    double power = 1.0;
    double harmonic = 0.0;
    double sum = 0.0;
    for (int k = 1; k < 200; ++k) {
      power *= q / (static_cast<double>(k) * k);
      harmonic += 1.0 / k;
      const double term = -harmonic * power;
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum) && k > 2) break;
    }
    return log_part * series_j(0, x) + (2.0 / kPi) * sum;
  }
  // -(1/pi) sum_{k>=0} (-1)^k (H_k + H_{k+1}) (x/2)^{2k+1} / (k! (k+1)!)
  double power = 0.5 * x;
  double h_k = 0.0;
  double sum = power * (h_k + 1.0);
  for (int k = 1; k < 200; ++k) {
    power *= q / (static_cast<double>(k) * (k + 1));
    h_k += 1.0 / k;
    const double term = power * (2.0 * h_k + 1.0 / (k + 1));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum) && k > 2) break;
  }
  return log_part * series_j(1, x) - 2.0 / (kPi * x) - sum / kPi;
}

// Hankel asymptotic expansion; returns (J_n, Y_n).
std::pair<double, double> asymptotic_jy(int n, double x) {
  const double mu = 4.0 * n * n;
  const double inv8x = 1.0 / (8.0 * x);
  double p = 1.0;
  double q = 0.0;
  double a = 1.0;  // a_k / x^k with alternating sign folded in below
  double previous = 1.0;
  for (int k = 1; k < 80; ++k) {
    const double odd = 2.0 * k - 1.0;
    a *= (mu - odd * odd) * inv8x / k;
    if (std::abs(a) > previous) break;  // asymptotic series started diverging
    previous = std::abs(a);
    // k = 1 -> Q+, k = 2 -> P-, k = 3 -> Q-, k = 4 -> P+, ...
    switch (k % 4) {
      case 1: q += a; break;
      case 2: p -= a; break;
      case 3: q -= a; break;
      case 0: p += a; break;
    }
    if (std::abs(a) < 1e-18) break;
  }
  const double phase = x - (0.5 * n + 0.25) * kPi;
  const double amp = std::sqrt(2.0 / (kPi * x));
  const double c = std::cos(phase);
  const double s = std::sin(phase);
  return {amp * (p * c - q * s), amp * (p * s + q * c)};
}

}  // namespace

double bessel_cyl(BesselKind kind, int order, double x) {
  if (order != 0 && order != 1) {
    throw DomainError("bessel_cyl: only orders 0 and 1 are supported, got " + std::to_string(order));
  }
  if (!std::isfinite(x)) throw DomainError("bessel_cyl: non-finite argument");
  if (kind == BesselKind::J) {
    if (x < 0.0) throw DomainError("bessel_cyl: J requires x >= 0");
    if (x < kSeriesLimit) return series_j(order, x);
    return asymptotic_jy(order, x).first;
  }
  if (x <= 0.0) throw DomainError("bessel_cyl: Y requires x > 0 (logarithmic singularity)");
  if (x < kSeriesLimit) return series_y(order, x);
  return asymptotic_jy(order, x).second;
}

Complex hankel1(int order, double x) {
  if (!(x > 0.0)) throw DomainError("hankel1: requires x > 0");
  if (x >= kSeriesLimit && (order == 0 || order == 1)) {
    const auto [j, y] = asymptotic_jy(order, x);
    return {j, y};
  }
  return {bessel_cyl(BesselKind::J, order, x), bessel_cyl(BesselKind::Y, order, x)};
}

}  // namespace nis
