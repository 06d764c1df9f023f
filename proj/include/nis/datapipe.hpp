#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nis/forward.hpp"
#include "nis/geometry.hpp"

namespace nis {

/// 8-bit grayscale image, row 0 at the top.
struct ByteImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
  bool operator==(const ByteImage&) const = default;
};

/// Parses an IDX file of unsigned bytes with three dimensions (count, rows, cols).
std::vector<ByteImage> decode_idx(const std::string& bytes);
std::vector<ByteImage> read_idx(const std::string& path);

inline constexpr std::uint8_t kDefaultThreshold = 128;

/// Binarizes the image (pixel >= threshold -> chi_value) and places it on the
/// grid by nearest-neighbour upscaling with the largest integer factor that
/// fits, centered. Image row 0 lands on the top grid row (largest y).
ContrastMap image_to_contrast(const ByteImage& image, const Grid& grid, Complex chi_value,
                              std::uint8_t threshold = kDefaultThreshold);

/// Connected stroke shapes: a persistent random walk stamped with a 2 or 3
/// cell brush, stopped once it covers a drawn fraction in [0.05, 0.30] of the
/// grid, with a one-cell empty margin. Shape i depends only on (seed, i).
std::vector<ContrastMap> synth_shapes(std::uint64_t seed, const Grid& grid, int count, Complex chi_value);

struct DatasetHeader {
  Grid grid = Grid(1, 1, 1.0, {}, 1.0);
  MeasurementSetup setup;
  Incidence incidence = Incidence::LineSource;
  /// +inf for noiseless data.
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct DatasetSample {
  ContrastMap chi;
  CMatrix measurements;  // N x M
  ContrastMap chi_bp;
};

struct ScatteringDataset {
  DatasetHeader header;
  std::vector<DatasetSample> samples;

  std::size_t size() const { return samples.size(); }
};

/// Simulates every shape, adds noise at snr_db (seeded per sample) and forms
/// the back-propagation image of the noisy data.
ScatteringDataset build_dataset(const std::vector<ContrastMap>& shapes, const Grid& grid,
                                const MeasurementSetup& setup, double snr_db, std::uint64_t seed,
                                Incidence incidence = Incidence::LineSource, SolverOptions options = {});

/// Seeded shuffle then contiguous split. Train and validation sizes are
/// rounded from the fractions; the test split takes the remainder.
std::array<ScatteringDataset, 3> split(const ScatteringDataset& dataset, const std::array<double, 3>& fractions,
                                       std::uint64_t seed);

/// NISD container: "NISD", u32 version, u32 header length, key=value header
/// lines, then per sample chi, measurements and chi_bp as little-endian f64
/// (re, im) pairs, row-major.
std::string encode_dataset(const ScatteringDataset& dataset);
ScatteringDataset decode_dataset(const std::string& bytes);
void write_dataset(const ScatteringDataset& dataset, const std::string& path);
ScatteringDataset read_dataset(const std::string& path);

}  // namespace nis
