#pragma once

#include <cmath>
#include <vector>

#include "nis/core.hpp"

namespace nis {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Reference configuration constants of the imaging experiment.
namespace config {
inline constexpr double kWavelength = 0.075;          // meters
inline constexpr double kDomainWavelengths = 5.6;     // side of the square domain
inline constexpr double kRingRadiusWavelengths = 10.0;
inline constexpr int kPaperCells = 110;
inline constexpr int kPaperTransceivers = 36;
inline constexpr double kPaperEpsR = 3.0;
inline constexpr int kDeskCells = 32;
inline constexpr int kDeskTransceivers = 16;

inline double frequency_for(double wavelength) { return kSpeedOfLight / wavelength; }
}  // namespace config

/// Uniform square pixelation of the investigation domain.
///
/// Pixel p maps to (row, col) = (p / nx, p % nx); rows run along +y from the
/// origin (lower-left corner), columns along +x.
class Grid {
 public:
  Grid(int nx, int ny, double cell_size, Point origin, double k0);

  /// Square n x n grid centered on (0, 0).
  static Grid centered(int nx, int ny, double cell_size, double k0);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double cell_size() const { return cell_size_; }
  Point origin() const { return origin_; }
  double k0() const { return k0_; }

  /// Radius of the disk with the same area as one cell.
  double equivalent_radius() const;
  Point center() const;
  double half_diagonal() const;
  /// True when p lies in the closed bounding box of the domain.
  bool contains(Point p) const;

  int index(int row, int col) const;
  int row(int p) const { return p / nx_; }
  int col(int p) const { return p % nx_; }
  /// Throws std::out_of_range for p outside [0, size()).
  Point pixel_center(int p) const;

  bool operator==(const Grid&) const = default;

 private:
  int nx_;
  int ny_;
  double cell_size_;
  Point origin_;
  double k0_;
};

struct MeasurementSetup {
  std::vector<Point> tx;
  std::vector<Point> rx;
  double frequency = 0.0;

  int n_tx() const { return static_cast<int>(tx.size()); }
  int n_rx() const { return static_cast<int>(rx.size()); }
};

/// Transmitters at angles 2 pi n / N and receivers at 2 pi m / M on a circle.
MeasurementSetup make_ring_setup(int n_tx, int n_rx, double radius, double frequency,
                                 Point center = {});

/// Throws ConfigError unless every antenna lies strictly outside the grid.
void validate_pairing(const Grid& grid, const MeasurementSetup& setup);

/// Complex contrast per pixel, row-major.
struct ContrastMap {
  Grid grid;
  CVector chi;

  explicit ContrastMap(const Grid& g) : grid(g), chi(CVector::Zero(g.size())) {}
  ContrastMap(const Grid& g, CVector values);
};

/// Pixels whose centers lie strictly inside the disk receive chi_value.
ContrastMap rasterize_disk(const Grid& grid, Point center, double radius, Complex chi_value);

}  // namespace nis
