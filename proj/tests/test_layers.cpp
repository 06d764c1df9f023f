#include <doctest.h>

#include <cmath>
#include <functional>

#include "nis/layers.hpp"
#include "nis/rng.hpp"

using namespace nis;

namespace {

ComplexTensor random_tensor(int c, int h, int w, RngStream& rng, double scale = 1.0) {
  ComplexTensor t(c, h, w);
  for (Complex& z : t.data) z = scale * Complex(rng.normal(), rng.normal());
  return t;
}

ConvLayer random_conv(int c_out, int c_in, int f, RngStream& rng) {
  ConvLayer l(c_out, c_in, f);
  for (Complex& w : l.weights) w = Complex(rng.normal(), rng.normal());
  for (Complex& b : l.biases) b = Complex(rng.normal(), rng.normal());
  return l;
}

// out[o,y,x] = b[o] + sum w[o,c,ky,kx] x[c, y+ky-r, x+kx-r], zero outside.
ComplexTensor conv_oracle(const ComplexTensor& x, const ConvLayer& l) {
  const int r = l.f / 2;
  ComplexTensor out(l.c_out, x.height, x.width);
  for (int o = 0; o < l.c_out; ++o) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        Complex s = l.biases[o];
        for (int c = 0; c < l.c_in; ++c) {
          for (int ky = 0; ky < l.f; ++ky) {
            for (int kx = 0; kx < l.f; ++kx) {
              const int sy = y + ky - r, sx = xx + kx - r;
              if (sy < 0 || sy >= x.height || sx < 0 || sx >= x.width) continue;
              s += l.weight(o, c, ky, kx) * x.at(c, sy, sx);
            }
          }
        }
        out.at(o, y, xx) = s;
      }
    }
  }
  return out;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Probe loss L(y) = sum Re(conj(R) y); its gradient with respect to y is R.
double probe(const ComplexTensor& y, const ComplexTensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (std::conj(r.data[i]) * y.data[i]).real();
  return s;
}

// Central differences of f over every re/im component of params.
std::vector<Complex> fd_gradient(std::vector<Complex>& params, const std::function<double()>& f, double h = 1e-6) {
  std::vector<Complex> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Complex saved = params[i];
    double parts[2];
    for (int part = 0; part < 2; ++part) {
      const Complex step = part == 0 ? Complex(h, 0.0) : Complex(0.0, h);
      params[i] = saved + step;
      const double up = f();
      params[i] = saved - step;
      const double down = f();
      parts[part] = (up - down) / (2.0 * h);
    }
    params[i] = saved;
    g[i] = Complex(parts[0], parts[1]);
  }
  return g;
}

double rel_error(const std::vector<Complex>& analytic, const std::vector<Complex>& fd) {
  REQUIRE(analytic.size() == fd.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    num += std::norm(analytic[i] - fd[i]);
    den += std::norm(fd[i]);
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("identity kernel reproduces the input") {
  RngStream rng(1);
  const ComplexTensor x = random_tensor(1, 5, 7, rng);
  ConvLayer l(1, 1, 1);
  l.weights[0] = 1.0;
  CHECK(cconv2d(x, l) == x);
}

TEST_CASE("imaginary kernel on real input") {
  RngStream rng(2);
  ComplexTensor x(1, 6, 6);
  for (Complex& z : x.data) z = rng.normal();
  ConvLayer real_k(1, 1, 3), imag_k(1, 1, 3);
  for (std::size_t i = 0; i < real_k.weights.size(); ++i) {
    const double k = rng.normal();
    real_k.weights[i] = k;
    imag_k.weights[i] = Complex(0.0, k);
  }
  const ComplexTensor a = cconv2d(x, real_k);
  const ComplexTensor b = cconv2d(x, imag_k);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.data[i].imag() == 0.0);
    CHECK(std::abs(b.data[i] - Complex(0.0, 1.0) * a.data[i]) <= 1e-15);
  }
}

TEST_CASE("convolution matches the nested-loop oracle") {
  RngStream rng(3);
  for (auto [c_out, c_in, f, h, w] : {std::tuple{1, 1, 3, 6, 6}, std::tuple{4, 3, 5, 7, 9}, std::tuple{2, 2, 9, 4, 4}}) {
    CAPTURE(f);
    const ComplexTensor x = random_tensor(c_in, h, w, rng);
    const ConvLayer l = random_conv(c_out, c_in, f, rng);
    CHECK(max_abs_diff(cconv2d(x, l), conv_oracle(x, l)) <= 1e-12);
  }
}

TEST_CASE("convolution shape errors") {
  const ComplexTensor x(2, 4, 4);
  CHECK_THROWS_AS(cconv2d(x, ConvLayer(1, 3, 3)), ShapeError);
  CHECK_THROWS_AS(ConvLayer(1, 1, 4), ConfigError);
  ConvLayer broken(1, 2, 3);
  broken.weights.pop_back();
  CHECK_THROWS_AS(cconv2d(x, broken), ShapeError);
}

TEST_CASE("crelu") {
  ComplexTensor x(1, 1, 4);
  x.data = {Complex(0.5, 2.0), Complex(-1.0, -1.0), Complex(-1.0, 2.0), Complex(3.0, -0.1)};
  const ComplexTensor y = crelu(x);
  CHECK(y.data[0] == Complex(0.5, 2.0));
  CHECK(y.data[1] == Complex(0.0, 0.0));
  CHECK(y.data[2] == Complex(0.0, 2.0));
  CHECK(y.data[3] == Complex(3.0, 0.0));
}

TEST_CASE("max pooling") {
  SUBCASE("constant block picks the first entry") {
    const ComplexTensor x(1, 2, 2, Complex(0.3, -0.4));
    auto [y, memo] = maxpool2(x);
    CHECK(y.data[0] == Complex(0.3, -0.4));
    CHECK(memo.winners[0] == 0);
  }
  SUBCASE("largest magnitude wins") {
    ComplexTensor x(1, 2, 2);
    x.data = {1.0, Complex(0.0, 3.0), -2.0, 0.0};
    auto [y, memo] = maxpool2(x);
    CHECK(y.data[0] == Complex(0.0, 3.0));
    CHECK(memo.winners[0] == 1);
  }
  SUBCASE("odd dimensions are rejected") {
    CHECK_THROWS_AS(maxpool2(ComplexTensor(1, 3, 4)), ShapeError);
  }
  SUBCASE("round trips") {
    RngStream rng(4);
    const ComplexTensor small = random_tensor(3, 4, 5, rng);
    const ComplexTensor up = upsample2(small);
    CHECK(up.channels == 3);
    CHECK(up.height == 8);
    CHECK(up.width == 10);
    CHECK(maxpool2(up).first == small);
  }
}

TEST_CASE("upsampling") {
  ComplexTensor x(1, 1, 1, Complex(1.5, -2.0));
  const ComplexTensor y = upsample2(x);
  CHECK(y.height == 2);
  CHECK(y.width == 2);
  for (const Complex& z : y.data) CHECK(z == Complex(1.5, -2.0));
}

TEST_CASE("euclidean loss") {
  RngStream rng(5);
  const ComplexTensor a = random_tensor(1, 4, 6, rng);
  const ComplexTensor b = random_tensor(1, 4, 6, rng);
  CHECK(euclidean_loss(a, a) == 0.0);
  CHECK(euclidean_loss(a, b) == doctest::Approx(euclidean_loss(b, a)).epsilon(1e-15));
  ComplexTensor shifted = a;
  const Complex c(0.3, -1.2);
  for (Complex& z : shifted.data) z += c;
  CHECK(euclidean_loss(shifted, a) == doctest::Approx(std::norm(c) / 2.0).epsilon(1e-13));
  CHECK_THROWS_AS(euclidean_loss(a, ComplexTensor(1, 6, 4)), ShapeError);
}

TEST_CASE("convolution gradients match finite differences") {
  RngStream rng(6);
  ComplexTensor x = random_tensor(3, 6, 5, rng);
  ConvLayer l = random_conv(4, 3, 3, rng);
  const ComplexTensor r = random_tensor(4, 6, 5, rng);
  const ConvGrad g = cconv2d_backward(x, l, r);
  auto loss = [&] { return probe(cconv2d(x, l), r); };
  CHECK(rel_error(g.weights, fd_gradient(l.weights, loss)) <= 1e-6);
  CHECK(rel_error(g.biases, fd_gradient(l.biases, loss)) <= 1e-6);
  CHECK(rel_error(g.input.data, fd_gradient(x.data, loss)) <= 1e-6);

  // The bias gradient is the per-channel sum of the upstream gradient.
  for (int o = 0; o < 4; ++o) {
    Complex s = 0.0;
    for (int i = 0; i < r.plane(); ++i) s += r.data[o * r.plane() + i];
    CHECK(std::abs(g.biases[o] - s) <= 1e-12);
  }
  CHECK(cconv2d_backward(x, l, r, false).input.size() == 0);
}

TEST_CASE("crelu, pooling and upsampling gradients match finite differences") {
  RngStream rng(7);
  ComplexTensor x = random_tensor(2, 6, 8, rng);
  SUBCASE("crelu") {
    const ComplexTensor r = random_tensor(2, 6, 8, rng);
    const ComplexTensor g = crelu_backward(x, r);
    CHECK(rel_error(g.data, fd_gradient(x.data, [&] { return probe(crelu(x), r); })) <= 1e-6);
  }
  SUBCASE("maxpool") {
    const ComplexTensor r = random_tensor(2, 3, 4, rng);
    const auto memo = maxpool2(x).second;
    const ComplexTensor g = maxpool2_backward(memo, r);
    CHECK(rel_error(g.data, fd_gradient(x.data, [&] { return probe(maxpool2(x).first, r); })) <= 1e-6);
  }
  SUBCASE("upsample") {
    const ComplexTensor r = random_tensor(2, 12, 16, rng);
    const ComplexTensor g = upsample2_backward(r);
    CHECK(rel_error(g.data, fd_gradient(x.data, [&] { return probe(upsample2(x), r); })) <= 1e-6);
  }
  SUBCASE("loss") {
    const ComplexTensor t = random_tensor(2, 6, 8, rng);
    const ComplexTensor g = euclidean_loss_grad(x, t);
    CHECK(rel_error(g.data, fd_gradient(x.data, [&] { return euclidean_loss(x, t); })) <= 1e-6);
  }
}

TEST_CASE("backward without a memo is an error") {
  CHECK_THROWS_AS(maxpool2_backward(PoolMemo{}, ComplexTensor(1, 2, 2)), Error);
  CHECK_THROWS_AS(crelu_backward(ComplexTensor(1, 2, 2), ComplexTensor(1, 2, 3)), ShapeError);
}
