#include "nis/layers.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace nis {

namespace {

using RowMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Patch matrix of shape (c_in f f) x (H W): entry (k, y W + x) holds the input
// sample under kernel tap k when the kernel is centered on (y, x).
RowMatrix im2col(const ComplexTensor& x, int f) {
  const int r = f / 2;
  const int H = x.height;
  const int W = x.width;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(x.channels) * f * f, static_cast<Eigen::Index>(H) * W);
  for (int c = 0; c < x.channels; ++c) {
    for (int ky = 0; ky < f; ++ky) {
      for (int kx = 0; kx < f; ++kx) {
        Complex* row = cols.row((static_cast<Eigen::Index>(c) * f + ky) * f + kx).data();
        const int dx = kx - r;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= H) continue;
          const Complex* src = &x.data[(static_cast<std::size_t>(c) * H + sy) * W];
          for (int xx = x_lo; xx < x_hi; ++xx) row[y * W + xx] = src[xx + dx];
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-add patch gradients back onto the input.
ComplexTensor col2im(const RowMatrix& cols, int channels, int H, int W, int f) {
  const int r = f / 2;
  ComplexTensor x(channels, H, W);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < f; ++ky) {
      for (int kx = 0; kx < f; ++kx) {
        const Complex* row = cols.row((static_cast<Eigen::Index>(c) * f + ky) * f + kx).data();
        const int dx = kx - r;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= H) continue;
          Complex* dst = &x.data[(static_cast<std::size_t>(c) * H + sy) * W];
          for (int xx = x_lo; xx < x_hi; ++xx) dst[xx + dx] += row[y * W + xx];
        }
      }
    }
  }
  return x;
}

void check_conv(const ComplexTensor& x, const ConvLayer& layer, const char* who) {
  if (x.channels != layer.c_in) {
    throw ShapeError(std::string(who) + ": input " + x.shape_string() + " has " + std::to_string(x.channels) +
                     " channels, layer expects " + std::to_string(layer.c_in));
  }
  if (layer.weights.size() != static_cast<std::size_t>(layer.c_out) * layer.kernel_size() ||
      layer.biases.size() != static_cast<std::size_t>(layer.c_out)) {
    throw ShapeError(std::string(who) + ": layer parameter arrays have the wrong length");
  }
}

void check_same(const ComplexTensor& a, const ComplexTensor& b, const char* who) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(who) + ": shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
  }
}

double positive(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

ConvLayer::ConvLayer(int c_out_, int c_in_, int f_) : c_out(c_out_), c_in(c_in_), f(f_) {
  if (c_out < 1 || c_in < 1) throw ConfigError("ConvLayer: channel counts must be positive");
  if (f < 1 || f % 2 == 0) throw ConfigError("ConvLayer: filter size must be odd, got " + std::to_string(f));
  weights.assign(static_cast<std::size_t>(c_out) * kernel_size(), Complex(0.0));
  biases.assign(static_cast<std::size_t>(c_out), Complex(0.0));
}

ComplexTensor cconv2d(const ComplexTensor& x, const ConvLayer& layer) {
  check_conv(x, layer, "cconv2d");
  const RowMatrix cols = im2col(x, layer.f);
  // Operands are copied into Eigen-owned storage: the vectorized reduction
  // order of small products depends on buffer alignment, which would make
  // results vary with the allocating thread.
  const RowMatrix w = ConstRowMap(layer.weights.data(), layer.c_out, static_cast<Eigen::Index>(layer.kernel_size()));
  RowMatrix y = w * cols;
  for (int o = 0; o < layer.c_out; ++o) y.row(o).array() += layer.biases[o];
  ComplexTensor out(layer.c_out, x.height, x.width);
  RowMap(out.data.data(), layer.c_out, x.plane()) = y;
  return out;
}

ConvGrad cconv2d_backward(const ComplexTensor& x, const ConvLayer& layer, const ComplexTensor& grad_out,
                          bool need_input) {
  check_conv(x, layer, "cconv2d_backward");
  if (grad_out.channels != layer.c_out || grad_out.height != x.height || grad_out.width != x.width) {
    throw ShapeError("cconv2d_backward: upstream gradient " + grad_out.shape_string() + " does not match output");
  }
  const Eigen::Index K = static_cast<Eigen::Index>(layer.kernel_size());
  const RowMatrix cols = im2col(x, layer.f);
  const RowMatrix g = ConstRowMap(grad_out.data.data(), layer.c_out, x.plane());

  ConvGrad grad;
  grad.weights.resize(static_cast<std::size_t>(layer.c_out) * K);
  const RowMatrix dw = g * cols.adjoint();
  RowMap(grad.weights.data(), layer.c_out, K) = dw;
  grad.biases.resize(layer.c_out);
  for (int o = 0; o < layer.c_out; ++o) grad.biases[o] = g.row(o).sum();
  if (need_input) {
    const RowMatrix w = ConstRowMap(layer.weights.data(), layer.c_out, K);
    const RowMatrix dcols = w.adjoint() * g;
    grad.input = col2im(dcols, x.channels, x.height, x.width, layer.f);
  }
  return grad;
}

ComplexTensor crelu(const ComplexTensor& x) {
  ComplexTensor y = x;
  for (Complex& z : y.data) z = Complex(positive(z.real()), positive(z.imag()));
  return y;
}

ComplexTensor crelu_backward(const ComplexTensor& pre_activation, const ComplexTensor& grad_out) {
  check_same(pre_activation, grad_out, "crelu_backward");
  ComplexTensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Complex z = pre_activation.data[i];
    g.data[i] = Complex(z.real() > 0.0 ? g.data[i].real() : 0.0, z.imag() > 0.0 ? g.data[i].imag() : 0.0);
  }
  return g;
}

std::pair<ComplexTensor, PoolMemo> maxpool2(const ComplexTensor& x) {
  if (x.height % 2 != 0 || x.width % 2 != 0) {
    throw ShapeError("maxpool2: spatial dimensions must be even, got " + x.shape_string());
  }
  const int Ho = x.height / 2;
  const int Wo = x.width / 2;
  ComplexTensor out(x.channels, Ho, Wo);
  PoolMemo memo{x.channels, x.height, x.width, std::vector<int>(out.size())};
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < Ho; ++y) {
      for (int xx = 0; xx < Wo; ++xx) {
        int best = -1;
        double best_mag = -1.0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (c * x.height + 2 * y + dy) * x.width + 2 * xx + dx;
            const double mag = std::norm(x.data[idx]);
            if (mag > best_mag) {
              best_mag = mag;
              best = idx;
            }
          }
        }
        const int o = (c * Ho + y) * Wo + xx;
        out.data[o] = x.data[best];
        memo.winners[o] = best;
      }
    }
  }
  return {std::move(out), std::move(memo)};
}

ComplexTensor maxpool2_backward(const PoolMemo& memo, const ComplexTensor& grad_out) {
  if (memo.winners.empty() && grad_out.size() != 0) throw Error("maxpool2_backward: missing pooling memo");
  if (grad_out.channels != memo.channels || grad_out.height * 2 != memo.height || grad_out.width * 2 != memo.width ||
      memo.winners.size() != grad_out.size()) {
    throw ShapeError("maxpool2_backward: gradient " + grad_out.shape_string() + " does not match the memo");
  }
  ComplexTensor g(memo.channels, memo.height, memo.width);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g.data[memo.winners[o]] += grad_out.data[o];
  return g;
}

ComplexTensor upsample2(const ComplexTensor& x) {
  ComplexTensor out(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int xx = 0; xx < out.width; ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
    }
  }
  return out;
}

ComplexTensor upsample2_backward(const ComplexTensor& grad_out) {
  if (grad_out.height % 2 != 0 || grad_out.width % 2 != 0) {
    throw ShapeError("upsample2_backward: spatial dimensions must be even, got " + grad_out.shape_string());
  }
  ComplexTensor g(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < grad_out.height; ++y) {
      for (int xx = 0; xx < grad_out.width; ++xx) g.at(c, y / 2, xx / 2) += grad_out.at(c, y, xx);
    }
  }
  return g;
}

double euclidean_loss(const ComplexTensor& pred, const ComplexTensor& target) {
  check_same(pred, target, "euclidean_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::norm(pred.data[i] - target.data[i]);
  return s / (2.0 * pred.plane());
}

ComplexTensor euclidean_loss_grad(const ComplexTensor& pred, const ComplexTensor& target) {
  check_same(pred, target, "euclidean_loss_grad");
  ComplexTensor g = pred;
  const double scale = 1.0 / pred.plane();
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = (pred.data[i] - target.data[i]) * scale;
  return g;
}

}  // namespace nis
