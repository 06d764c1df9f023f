#include "nis/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nis {

Grid::Grid(int nx, int ny, double cell_size, Point origin, double k0)
    : nx_(nx), ny_(ny), cell_size_(cell_size), origin_(origin), k0_(k0) {
  if (nx <= 0 || ny <= 0) throw ConfigError("Grid: cell counts must be positive");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("Grid: cell_size must be positive");
  if (!(k0 > 0.0) || !std::isfinite(k0)) throw ConfigError("Grid: k0 must be positive");
}

Grid Grid::centered(int nx, int ny, double cell_size, double k0) {
  return Grid(nx, ny, cell_size, {-0.5 * nx * cell_size, -0.5 * ny * cell_size}, k0);
}

double Grid::equivalent_radius() const { return cell_size_ / std::sqrt(kPi); }

Point Grid::center() const {
  return {origin_.x + 0.5 * nx_ * cell_size_, origin_.y + 0.5 * ny_ * cell_size_};
}

double Grid::half_diagonal() const { return 0.5 * cell_size_ * std::hypot(nx_, ny_); }

bool Grid::contains(Point p) const {
  return p.x >= origin_.x && p.x <= origin_.x + nx_ * cell_size_ && p.y >= origin_.y &&
         p.y <= origin_.y + ny_ * cell_size_;
}

int Grid::index(int row, int col) const {
  if (row < 0 || row >= ny_ || col < 0 || col >= nx_) {
    throw std::out_of_range("Grid::index: (" + std::to_string(row) + ", " + std::to_string(col) +
                            ") outside grid");
  }
  return row * nx_ + col;
}

Point Grid::pixel_center(int p) const {
  if (p < 0 || p >= size()) {
    throw std::out_of_range("Grid::pixel_center: index " + std::to_string(p) + " outside [0, " +
                            std::to_string(size()) + ")");
  }
  return {origin_.x + (col(p) + 0.5) * cell_size_, origin_.y + (row(p) + 0.5) * cell_size_};
}

MeasurementSetup make_ring_setup(int n_tx, int n_rx, double radius, double frequency, Point center) {
  if (n_tx < 1 || n_rx < 1) throw ConfigError("make_ring_setup: need at least one transmitter and receiver");
  if (!(radius > 0.0)) throw ConfigError("make_ring_setup: radius must be positive");
  if (!(frequency > 0.0)) throw ConfigError("make_ring_setup: frequency must be positive");
  MeasurementSetup setup;
  setup.frequency = frequency;
  auto ring = [&](int count, std::vector<Point>& out) {
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      const double angle = 2.0 * kPi * i / count;
      out.push_back({center.x + radius * std::cos(angle), center.y + radius * std::sin(angle)});
    }
  };
  ring(n_tx, setup.tx);
  ring(n_rx, setup.rx);
  return setup;
}

void validate_pairing(const Grid& grid, const MeasurementSetup& setup) {
  if (setup.tx.empty() || setup.rx.empty()) throw ConfigError("measurement setup has no antennas");
  for (std::size_t i = 0; i < setup.tx.size(); ++i) {
    if (grid.contains(setup.tx[i])) {
      throw ConfigError("transmitter " + std::to_string(i) + " lies inside the investigation domain");
    }
  }
  for (std::size_t i = 0; i < setup.rx.size(); ++i) {
    if (grid.contains(setup.rx[i])) {
      throw ConfigError("receiver " + std::to_string(i) + " lies inside the investigation domain");
    }
  }
}

ContrastMap::ContrastMap(const Grid& g, CVector values) : grid(g), chi(std::move(values)) {
  if (chi.size() != g.size()) {
    throw ShapeError("ContrastMap: " + std::to_string(chi.size()) + " values for a grid of " +
                     std::to_string(g.size()) + " pixels");
  }
}

ContrastMap rasterize_disk(const Grid& grid, Point center, double radius, Complex chi_value) {
  ContrastMap map(grid);
  for (int p = 0; p < grid.size(); ++p) {
    if (distance(grid.pixel_center(p), center) < radius) map.chi[p] = chi_value;
  }
  return map;
}

}  // namespace nis
