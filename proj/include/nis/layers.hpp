#pragma once

#include <utility>
#include <vector>

#include "nis/tensor.hpp"

namespace nis {

// Gradients of a real loss L with respect to a complex quantity z are stored
// as dL/d(re z) + i dL/d(im z).

/// Complex convolution layer with "same" zero padding. Like every CNN
/// framework this computes cross-correlation (the kernel is not flipped).
struct ConvLayer {
  int c_out = 0;
  int c_in = 0;
  int f = 1;
  std::vector<Complex> weights;  // (c_out, c_in, f, f) row-major
  std::vector<Complex> biases;   // c_out

  ConvLayer() = default;
  /// Zero-initialized; f must be odd and positive.
  ConvLayer(int c_out, int c_in, int f);

  std::size_t kernel_size() const { return static_cast<std::size_t>(c_in) * f * f; }
  Complex& weight(int o, int c, int ky, int kx) { return weights[((static_cast<std::size_t>(o) * c_in + c) * f + ky) * f + kx]; }
  Complex weight(int o, int c, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * c_in + c) * f + ky) * f + kx];
  }

  bool operator==(const ConvLayer&) const = default;
};

ComplexTensor cconv2d(const ComplexTensor& x, const ConvLayer& layer);

struct ConvGrad {
  ComplexTensor input;  // empty when not requested
  std::vector<Complex> weights;
  std::vector<Complex> biases;
};

ConvGrad cconv2d_backward(const ComplexTensor& x, const ConvLayer& layer, const ComplexTensor& grad_out,
                          bool need_input = true);

/// max(0, re) + i max(0, im).
ComplexTensor crelu(const ComplexTensor& x);
/// Passes each component of grad_out where the matching pre-activation component is positive.
ComplexTensor crelu_backward(const ComplexTensor& pre_activation, const ComplexTensor& grad_out);

/// Winner of each 2x2 block as a flat index into the pooled input.
struct PoolMemo {
  int channels = 0;
  int height = 0;  // input height
  int width = 0;   // input width
  std::vector<int> winners;
};

/// Largest-magnitude entry per 2x2 block; ties go to the first in row-major order.
std::pair<ComplexTensor, PoolMemo> maxpool2(const ComplexTensor& x);
ComplexTensor maxpool2_backward(const PoolMemo& memo, const ComplexTensor& grad_out);

/// Nearest-neighbour 2x replication.
ComplexTensor upsample2(const ComplexTensor& x);
/// Sums each 2x2 block of grad_out.
ComplexTensor upsample2_backward(const ComplexTensor& grad_out);

/// (1 / (2 H W)) sum |pred - target|^2.
double euclidean_loss(const ComplexTensor& pred, const ComplexTensor& target);
/// (pred - target) / (H W).
ComplexTensor euclidean_loss_grad(const ComplexTensor& pred, const ComplexTensor& target);

}  // namespace nis
