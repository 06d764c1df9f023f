#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nis {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent dimensions between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or geometry.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace nis
