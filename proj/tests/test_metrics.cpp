#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "nis/metrics.hpp"
#include "nis/rng.hpp"

using namespace nis;
namespace fs = std::filesystem;

namespace {

RealImage random_image(int w, int h, std::uint64_t seed) {
  RngStream rng(seed);
  RealImage img(w, h);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

// Direct 2D windowed SSIM with mirrored coordinates, no separability.
double ssim_oracle(const RealImage& a, const RealImage& b) {
  const int R = 5;
  double wsum = 0.0;
  double win[11][11];
  for (int i = -R; i <= R; ++i) {
    for (int j = -R; j <= R; ++j) {
      win[i + R][j + R] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
      wsum += win[i + R][j + R];
    }
  }
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  double total = 0.0;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      double ma = 0, mb = 0;
      for (int i = -R; i <= R; ++i) {
        for (int j = -R; j <= R; ++j) {
          const double w = win[i + R][j + R] / wsum;
          ma += w * a.at(mirror(r + i, a.height), mirror(c + j, a.width));
          mb += w * b.at(mirror(r + i, a.height), mirror(c + j, a.width));
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = -R; i <= R; ++i) {
        for (int j = -R; j <= R; ++j) {
          const double w = win[i + R][j + R] / wsum;
          const double da = a.at(mirror(r + i, a.height), mirror(c + j, a.width)) - ma;
          const double db = b.at(mirror(r + i, a.height), mirror(c + j, a.width)) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      }
      const double c1 = 1e-4, c2 = 9e-4;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / (a.width * a.height);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("mse basics") {
  const RealImage x = random_image(7, 5, 1);
  CHECK(mse(x, x) == 0.0);
  CHECK(mse(RealImage(4, 4, 1.0), RealImage(4, 4, 0.0)) == 1.0);
  CHECK(mse(RealImage(3, 3, 0.25), RealImage(3, 3, 0.75)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(mse(RealImage(3, 4), RealImage(4, 3)), ShapeError);
}

TEST_CASE("ssim identities") {
  const RealImage x = random_image(20, 17, 2);
  const RealImage y = random_image(20, 17, 3);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-14));
  const double s = ssim(x, y);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK_THROWS_AS(ssim(RealImage(3, 4), RealImage(4, 4)), ShapeError);
}

TEST_CASE("ssim matches a direct windowed evaluation") {
  for (auto [w, h] : {std::pair{16, 16}, std::pair{9, 23}, std::pair{4, 3}}) {
    CAPTURE(w);
    CAPTURE(h);
    const RealImage a = random_image(w, h, 10 + w);
    const RealImage b = random_image(w, h, 20 + h);
    CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) <= 1e-12);
  }
}

TEST_CASE("ssim of constant images has a closed form") {
  const double c1 = 1e-4;
  for (auto [m1, m2] : {std::pair{0.3, 0.7}, std::pair{0.0, 1.0}, std::pair{0.5, 0.5}, std::pair{0.0, 0.0},
                        std::pair{0.9, 0.05}}) {
    const double expected = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
    CHECK(std::abs(ssim(RealImage(12, 10, m1), RealImage(12, 10, m2)) - expected) <= 1e-12);
  }
}

TEST_CASE("ssim decreases along a noise ladder") {
  const int w = 32, h = 32;
  RealImage base(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) base.at(r, c) = (std::hypot(r - 15.5, c - 12.0) < 8.0) ? 0.8 : 0.1;
  }
  RngStream rng(404);
  RealImage unit(w, h);
  for (double& v : unit.pixels) v = rng.normal();
  double prev = ssim(base, base);
  for (double sigma : {0.01, 0.03, 0.1, 0.3, 1.0}) {
    RealImage noisy = base;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy.pixels[i] += sigma * unit.pixels[i];
    const double s = ssim(base, noisy);
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("histogram") {
  SUBCASE("single bin occupied") {
    const auto h = histogram({0.41, 0.42, 0.43}, 10, 0.0, 1.0);
    int nonzero = 0;
    for (double c : h) nonzero += c != 0.0;
    CHECK(nonzero == 1);
    CHECK(h[4] == 3.0);
  }
  SUBCASE("counts and normalization") {
    const std::vector<double> v{-0.5, 0.0, 0.1, 0.55, 0.99, 1.0, 3.0};
    const auto h = histogram(v, 4, 0.0, 1.0);
    double sum = 0.0;
    for (double c : h) sum += c;
    CHECK(sum == 7.0);
    CHECK(h[0] == 3.0);
    CHECK(h[3] == 3.0);
    const auto n = histogram(v, 4, 0.0, 1.0, true);
    double nsum = 0.0;
    for (double c : n) nsum += c;
    CHECK(nsum == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("empty input") {
    for (double c : histogram({}, 5, 0.0, 1.0, true)) CHECK(c == 0.0);
  }
  CHECK_THROWS_AS(histogram({1.0}, 0, 0.0, 1.0), ConfigError);
}

TEST_CASE("evaluate normalizes both maps") {
  const Grid g = Grid::centered(12, 12, 0.01, 80.0);
  const ContrastMap truth = rasterize_disk(g, g.center(), 0.03, 2.0);
  ContrastMap scaled = truth;
  scaled.chi *= 0.1;
  const SampleQuality q = evaluate(scaled, truth);
  CHECK(q.mse == 0.0);
  CHECK(q.ssim == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("report files") {
  const fs::path dir = fs::temp_directory_path() / "nis_metrics_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Grid g = Grid::centered(5, 3, 0.01, 80.0);
  QualityReport report;
  ContrastMap a(g), b(g);
  a.chi.setConstant(1.0);
  b.chi[0] = 1.0;
  b.chi[14] = 0.5;
  report.add(a, b);
  report.add(b, b);
  report.add(a, a);
  CHECK(report.size() == 3);
  CHECK(report.mean_mse() >= 0.0);

  const std::string prefix = (dir / "r").string();
  write_report(report, prefix);
  const std::string csv = slurp(dir / "r.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("index,ssim,mse\n", 0) == 0);

  const std::string pgm = slurp(dir / "r_truth_0000.pgm");
  const std::string header = "P5\n5 3\n255\n";
  REQUIRE(pgm.size() == header.size() + 15);
  CHECK(pgm.substr(0, header.size()) == header);
  // Row 0 of the grid is written last; pixel 14 is row 2, col 4.
  CHECK(static_cast<unsigned char>(pgm[header.size() + 4]) == 128);
  CHECK(static_cast<unsigned char>(pgm[header.size() + 10]) == 255);

  const std::string first = slurp(dir / "r.csv") + slurp(dir / "r_histogram.csv") + slurp(dir / "r_recon_0002.pgm");
  write_report(report, prefix);
  CHECK(first == slurp(dir / "r.csv") + slurp(dir / "r_histogram.csv") + slurp(dir / "r_recon_0002.pgm"));

  CHECK_THROWS_AS(write_report(report, (dir / "missing" / "r").string()), Error);
  fs::remove_all(dir);
}
