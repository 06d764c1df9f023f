#pragma once

#include <string>
#include <vector>

#include "nis/geometry.hpp"
#include "nis/image.hpp"

namespace nis {

/// Mean of squared pixel differences.
double mse(const RealImage& a, const RealImage& b);

/// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2 for unit dynamic range, half-sample symmetric borders.
double ssim(const RealImage& a, const RealImage& b);

/// Uniform bins over [lo, hi]; out-of-range values land in the edge bins.
/// Normalized counts sum to 1 unless values is empty.
std::vector<double> histogram(const std::vector<double>& values, int n_bins, double lo, double hi,
                              bool normalized = false);

struct SampleQuality {
  double ssim = 0.0;
  double mse = 0.0;
};

/// Both maps display-normalized independently before scoring.
SampleQuality evaluate(const ContrastMap& reconstruction, const ContrastMap& truth);

struct QualityReport {
  std::vector<double> ssim;
  std::vector<double> mse;
  std::vector<RealImage> reconstructions;
  std::vector<RealImage> truths;

  /// Scores one sample and keeps its display images.
  void add(const ContrastMap& reconstruction, const ContrastMap& truth);

  std::size_t size() const { return ssim.size(); }
  double mean_ssim() const;
  double mean_mse() const;
  double std_ssim() const;
  double std_mse() const;
};

/// Writes <prefix>.csv (index,ssim,mse), <prefix>_histogram.csv (20 normalized
/// bins over [0, 1]) and, per sample, <prefix>_recon_NNNN.pgm and
/// <prefix>_truth_NNNN.pgm.
void write_report(const QualityReport& report, const std::string& prefix);

/// Binary 8-bit PGM. Values are clamped to [0, 1]; the last image row is written
/// first so that +y points up.
void write_pgm(const RealImage& image, const std::string& path);

}  // namespace nis
