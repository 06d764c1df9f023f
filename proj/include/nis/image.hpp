#pragma once

#include <vector>

namespace nis {

/// Real-valued image, row-major, row 0 first. Rows map one-to-one onto grid rows.
struct RealImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  RealImage() = default;
  RealImage(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return pixels.size(); }
};

}  // namespace nis
