#include "nis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nis/linimg.hpp"

namespace nis {

namespace {

void check_shapes(const RealImage& a, const RealImage& b, const char* who) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size()) {
    throw ShapeError(std::string(who) + ": image shapes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
}

// Half-sample symmetric index: -1 -> 0, n -> n - 1, periodic with 2n.
int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_taps() {
  std::vector<double> taps(2 * kRadius + 1);
  double sum = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    taps[i + kRadius] = std::exp(-0.5 * i * i / (kSigma * kSigma));
    sum += taps[i + kRadius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable Gaussian filter with reflective borders.
std::vector<double> blur(const std::vector<double>& img, int w, int h, const std::vector<double>& taps) {
  std::vector<double> tmp(img.size()), out(img.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) s += taps[k + kRadius] * img[r * w + reflect(c + k, w)];
      tmp[r * w + c] = s;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) s += taps[k + kRadius] * tmp[reflect(r + k, h) * w + c];
      out[r * w + c] = s;
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

double mse(const RealImage& a, const RealImage& b) {
  check_shapes(a, b, "mse");
  if (a.pixels.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(a.pixels.size());
}

double ssim(const RealImage& a, const RealImage& b) {
  check_shapes(a, b, "ssim");
  if (a.pixels.empty()) throw ShapeError("ssim: empty image");
  const int w = a.width;
  const int h = a.height;
  static const std::vector<double> taps = gaussian_taps();
  std::vector<double> aa(a.pixels.size()), bb(a.pixels.size()), ab(a.pixels.size());
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    aa[i] = a.pixels[i] * a.pixels[i];
    bb[i] = b.pixels[i] * b.pixels[i];
    ab[i] = a.pixels[i] * b.pixels[i];
  }
  const auto mu_a = blur(a.pixels, w, h, taps);
  const auto mu_b = blur(b.pixels, w, h, taps);
  const auto e_aa = blur(aa, w, h, taps);
  const auto e_bb = blur(bb, w, h, taps);
  const auto e_ab = blur(ab, w, h, taps);
  double total = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return total / static_cast<double>(a.pixels.size());
}

std::vector<double> histogram(const std::vector<double>& values, int n_bins, double lo, double hi, bool normalized) {
  if (n_bins < 1) throw ConfigError("histogram: n_bins must be >= 1");
  if (!(hi > lo)) throw ConfigError("histogram: range must satisfy lo < hi");
  std::vector<double> counts(n_bins, 0.0);
  for (double v : values) {
    int bin = static_cast<int>(std::floor((v - lo) / (hi - lo) * n_bins));
    bin = std::clamp(bin, 0, n_bins - 1);
    counts[bin] += 1.0;
  }
  if (normalized && !values.empty()) {
    for (double& c : counts) c /= static_cast<double>(values.size());
  }
  return counts;
}

SampleQuality evaluate(const ContrastMap& reconstruction, const ContrastMap& truth) {
  const RealImage r = normalize_for_display(reconstruction);
  const RealImage t = normalize_for_display(truth);
  return {ssim(r, t), mse(r, t)};
}

void QualityReport::add(const ContrastMap& reconstruction, const ContrastMap& truth) {
  RealImage r = normalize_for_display(reconstruction);
  RealImage t = normalize_for_display(truth);
  ssim.push_back(nis::ssim(r, t));
  mse.push_back(nis::mse(r, t));
  reconstructions.push_back(std::move(r));
  truths.push_back(std::move(t));
}

double QualityReport::mean_ssim() const { return mean_of(ssim); }
double QualityReport::mean_mse() const { return mean_of(mse); }
double QualityReport::std_ssim() const { return std_of(ssim); }
double QualityReport::std_mse() const { return std_of(mse); }

void write_pgm(const RealImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::string row(static_cast<std::size_t>(image.width), '\0');
  for (int r = image.height - 1; r >= 0; --r) {
    for (int c = 0; c < image.width; ++c) {
      const double v = std::clamp(image.at(r, c), 0.0, 1.0);
      row[c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw Error("write failed: " + path);
}

void write_report(const QualityReport& report, const std::string& prefix) {
  auto write_text = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw Error("write failed: " + path);
  };

  std::ostringstream csv;
  csv.precision(17);
  csv << "index,ssim,mse\n";
  for (std::size_t i = 0; i < report.size(); ++i) csv << i << ',' << report.ssim[i] << ',' << report.mse[i] << '\n';
  write_text(prefix + ".csv", csv.str());

  constexpr int kBins = 20;
  const auto hs = histogram(report.ssim, kBins, 0.0, 1.0, true);
  const auto hm = histogram(report.mse, kBins, 0.0, 1.0, true);
  std::ostringstream hist;
  hist.precision(17);
  hist << "bin_lo,bin_hi,ssim,mse\n";
  for (int b = 0; b < kBins; ++b) {
    hist << static_cast<double>(b) / kBins << ',' << static_cast<double>(b + 1) / kBins << ',' << hs[b] << ','
         << hm[b] << '\n';
  }
  write_text(prefix + "_histogram.csv", hist.str());

  char index[16];
  for (std::size_t i = 0; i < report.reconstructions.size(); ++i) {
    std::snprintf(index, sizeof index, "%04zu", i);
    write_pgm(report.reconstructions[i], prefix + "_recon_" + index + ".pgm");
    if (i < report.truths.size()) write_pgm(report.truths[i], prefix + "_truth_" + index + ".pgm");
  }
}

}  // namespace nis
