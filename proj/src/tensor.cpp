#include "nis/tensor.hpp"

#include <cmath>

namespace nis {

ComplexTensor::ComplexTensor(int c, int h, int w, Complex fill) : channels(c), height(h), width(w) {
  if (c < 0 || h < 0 || w < 0) throw ShapeError("ComplexTensor: negative dimension");
  data.assign(static_cast<std::size_t>(c) * h * w, fill);
}

bool ComplexTensor::all_finite() const {
  for (const Complex& z : data) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  }
  return true;
}

std::string ComplexTensor::shape_string() const {
  return "(" + std::to_string(channels) + ", " + std::to_string(height) + ", " + std::to_string(width) + ")";
}

ComplexTensor to_tensor(const ContrastMap& chi) {
  const Grid& g = chi.grid;
  if (chi.chi.size() != g.size()) throw ShapeError("to_tensor: contrast length does not match grid");
  ComplexTensor t(1, g.ny(), g.nx());
  for (int p = 0; p < g.size(); ++p) t.data[p] = chi.chi[p];
  return t;
}

ContrastMap to_contrast(const ComplexTensor& t, const Grid& grid) {
  if (t.channels != 1 || t.height != grid.ny() || t.width != grid.nx()) {
    throw ShapeError("to_contrast: tensor " + t.shape_string() + " does not match the grid");
  }
  ContrastMap chi(grid);
  for (int p = 0; p < grid.size(); ++p) chi.chi[p] = t.data[p];
  return chi;
}

}  // namespace nis
