#pragma once

#include <string>
#include <vector>

#include "nis/geometry.hpp"

namespace nis {

/// Complex (channels, height, width) tensor, row-major.
struct ComplexTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<Complex> data;

  ComplexTensor() = default;
  ComplexTensor(int c, int h, int w, Complex fill = 0.0);

  std::size_t size() const { return data.size(); }
  int plane() const { return height * width; }
  Complex& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  Complex at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  bool same_shape(const ComplexTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool all_finite() const;
  std::string shape_string() const;

  bool operator==(const ComplexTensor&) const = default;
};

/// 1 x ny x nx tensor; tensor row y is grid row y.
ComplexTensor to_tensor(const ContrastMap& chi);
ContrastMap to_contrast(const ComplexTensor& t, const Grid& grid);

}  // namespace nis
