#include "nis/datapipe.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "nis/linimg.hpp"
#include "nis/parallel.hpp"
#include "nis/rng.hpp"

namespace nis {

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::string& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

std::uint32_t be32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
  return v;
}

}  // namespace

// ---------------------------------------------------------------- IDX

std::vector<ByteImage> decode_idx(const std::string& bytes) {
  if (bytes.size() < 4) {
    throw FormatError("idx: need 4 magic bytes, file has " + std::to_string(bytes.size()));
  }
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("idx: bad magic (first two bytes must be zero)");
  const auto type = static_cast<unsigned char>(bytes[2]);
  const auto rank = static_cast<unsigned char>(bytes[3]);
  if (type != 0x08) throw FormatError("idx: unsupported data type 0x" + std::to_string(type) + " (need unsigned byte)");
  if (rank != 3) throw FormatError("idx: unsupported rank " + std::to_string(rank) + " (need 3: count, rows, cols)");
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) {
    throw FormatError("idx: truncated header: expected " + std::to_string(header) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  const std::uint64_t count = be32(bytes, 4);
  const std::uint64_t rows = be32(bytes, 8);
  const std::uint64_t cols = be32(bytes, 12);
  if (rows == 0 || cols == 0 || rows > (1u << 15) || cols > (1u << 15)) {
    throw FormatError("idx: invalid image size " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const std::uint64_t expected = header + count * rows * cols;
  if (bytes.size() != expected) {
    throw FormatError("idx: payload size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  std::vector<ByteImage> images(count);
  const std::size_t plane = rows * cols;
  for (std::size_t i = 0; i < count; ++i) {
    images[i].rows = static_cast<int>(rows);
    images[i].cols = static_cast<int>(cols);
    const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data() + header + i * plane);
    images[i].pixels.assign(src, src + plane);
  }
  return images;
}

std::vector<ByteImage> read_idx(const std::string& path) { return decode_idx(slurp(path)); }

ContrastMap image_to_contrast(const ByteImage& image, const Grid& grid, Complex chi_value, std::uint8_t threshold) {
  if (image.rows <= 0 || image.cols <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.rows) * image.cols) {
    throw ShapeError("image_to_contrast: malformed image");
  }
  if (image.rows > grid.ny() || image.cols > grid.nx()) {
    throw ShapeError("image_to_contrast: image " + std::to_string(image.rows) + "x" + std::to_string(image.cols) +
                     " does not fit the " + std::to_string(grid.ny()) + "x" + std::to_string(grid.nx()) + " grid");
  }
  const int scale = std::min(grid.ny() / image.rows, grid.nx() / image.cols);
  const int off_r = (grid.ny() - scale * image.rows) / 2;
  const int off_c = (grid.nx() - scale * image.cols) / 2;
  ContrastMap out(grid);
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      if (image.at(r, c) < threshold) continue;
      for (int dr = 0; dr < scale; ++dr) {
        const int row = grid.ny() - 1 - (off_r + r * scale + dr);
        for (int dc = 0; dc < scale; ++dc) out.chi[grid.index(row, off_c + c * scale + dc)] = chi_value;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- shapes

std::vector<ContrastMap> synth_shapes(std::uint64_t seed, const Grid& grid, int count, Complex chi_value) {
  if (count < 1) throw ConfigError("synth_shapes: count must be at least 1");
  const int nx = grid.nx(), ny = grid.ny();
  const int total = grid.size();
  const int lo_cells = static_cast<int>(std::ceil(0.05 * total));
  const int hi_cells = static_cast<int>(std::floor(0.30 * total));
  if (nx < 5 || ny < 5 || lo_cells > hi_cells) {
    throw ConfigError("synth_shapes: grid " + std::to_string(nx) + "x" + std::to_string(ny) + " is too small");
  }
  constexpr int kDx[4] = {1, 0, -1, 0};
  constexpr int kDy[4] = {0, 1, 0, -1};

  std::vector<ContrastMap> shapes(static_cast<std::size_t>(count), ContrastMap(grid));
  parallel_for(shapes.size(), [&](std::size_t i) {
    RngStream rng(seed, i);
    const int thick = 2 + static_cast<int>(rng.below(2));
    const int target = lo_cells + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi_cells - lo_cells + 1)));
    // Brush cells relative to the walker: center first, then edge neighbours,
    // then corners, so each added cell touches one already present.
    std::vector<std::pair<int, int>> brush;
    if (thick == 2) {
      brush = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    } else {
      brush = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
    }
    // One empty cell between the brush and the domain edge.
    const int lo_x = thick == 2 ? 1 : 2, hi_x = nx - 3;
    const int lo_y = thick == 2 ? 1 : 2, hi_y = ny - 3;
    int x = lo_x + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi_x - lo_x + 1)));
    int y = lo_y + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi_y - lo_y + 1)));
    int dir = static_cast<int>(rng.below(4));

    std::vector<char> on(static_cast<std::size_t>(total), 0);
    int filled = 0;
    const long max_steps = 1000L * total;
    for (long step = 0; filled < target && step < max_steps; ++step) {
      for (const auto& [bx, by] : brush) {
        const int p = (y + by) * nx + (x + bx);
        if (!on[p]) {
          on[p] = 1;
          if (++filled == target) break;
        }
      }
      if (rng.uniform() < 0.3) dir = static_cast<int>(rng.below(4));
      for (int tries = 0; tries < 4; ++tries) {
        const int tx = x + kDx[dir], ty = y + kDy[dir];
        if (tx >= lo_x && tx <= hi_x && ty >= lo_y && ty <= hi_y) {
          x = tx;
          y = ty;
          break;
        }
        dir = (dir + 1 + static_cast<int>(rng.below(3))) % 4;
      }
    }
    for (int p = 0; p < total; ++p) {
      if (on[p]) shapes[i].chi[p] = chi_value;
    }
  });
  return shapes;
}

// ---------------------------------------------------------------- dataset

ScatteringDataset build_dataset(const std::vector<ContrastMap>& shapes, const Grid& grid,
                                const MeasurementSetup& setup, double snr_db, std::uint64_t seed, Incidence incidence,
                                SolverOptions options) {
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (!(shapes[i].grid == grid)) throw ConfigError("build_dataset: shape " + std::to_string(i) + " is on another grid");
  }
  validate_pairing(grid, setup);
  const Operators ops = assemble(grid, setup, incidence);
  const CounterRng noise_seeds(seed, 0x6e6f697365ULL);

  ScatteringDataset ds;
  ds.header = DatasetHeader{grid, setup, incidence, snr_db, seed};
  ds.samples.resize(shapes.size(), DatasetSample{ContrastMap(grid), CMatrix(), ContrastMap(grid)});
  parallel_for(shapes.size(), [&](std::size_t i) {
    try {
      DatasetSample& s = ds.samples[i];
      s.chi = shapes[i];
      s.measurements = add_noise(simulate(ops, shapes[i], options), snr_db, noise_seeds.bits(i));
      s.chi_bp = backpropagate(ops, s.measurements);
    } catch (const NonConvergence& e) {
      throw NonConvergence("sample " + std::to_string(i) + ": " + e.what(), e.residual());
    } catch (const Error& e) {
      throw Error("sample " + std::to_string(i) + ": " + e.what());
    }
  });
  return ds;
}

std::array<ScatteringDataset, 3> split(const ScatteringDataset& dataset, const std::array<double, 3>& fractions,
                                       std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split: fractions must lie in [0, 1]");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ConfigError("split: " + std::to_string(n) + " samples leave an empty split (train " +
                      std::to_string(n_train) + ", val " + std::to_string(n_val) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, 0x73706c6974ULL);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::array<ScatteringDataset, 3> out;
  const std::size_t bounds[4] = {0, n_train, n_train + n_val, n};
  for (int k = 0; k < 3; ++k) {
    out[k].header = dataset.header;
    for (std::size_t j = bounds[k]; j < bounds[k + 1]; ++j) out[k].samples.push_back(dataset.samples[order[j]]);
  }
  return out;
}

// ---------------------------------------------------------------- NISD

namespace {

constexpr char kMagic[4] = {'N', 'I', 'S', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_c(std::string& out, Complex z) {
  for (double v : {z.real(), z.imag()}) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_points(const std::vector<Point>& pts) {
  std::string s;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) s += ';';
    s += fmt(pts[i].x) + ',' + fmt(pts[i].y);
  }
  return s;
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw FormatError("dataset header: bad number '" + s + "' for " + key);
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw FormatError("dataset header: bad integer '" + s + "' for " + key);
  }
  return v;
}

std::vector<Point> parse_points(const std::string& s, const std::string& key) {
  std::vector<Point> pts;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(';', start);
    if (end == std::string::npos) end = s.size();
    const std::string item = s.substr(start, end - start);
    const std::size_t comma = item.find(',');
    if (comma == std::string::npos) throw FormatError("dataset header: bad point '" + item + "' in " + key);
    pts.push_back({parse_double(item.substr(0, comma), key), parse_double(item.substr(comma + 1), key)});
    start = end + 1;
  }
  return pts;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("dataset truncated while reading " + what + ": expected " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_));
    }
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  Complex c() {
    double parts[2];
    for (double& d : parts) {
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
      pos_ += 8;
      d = std::bit_cast<double>(v);
    }
    return {parts[0], parts[1]};
  }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

const char* kKeys[] = {"nx", "ny", "cell_size", "origin_x", "origin_y", "k0",  "frequency", "incidence",
                       "n_tx", "n_rx", "tx",       "rx",       "snr_db",   "seed", "count"};

}  // namespace

std::string encode_dataset(const ScatteringDataset& ds) {
  const DatasetHeader& h = ds.header;
  const int P = h.grid.size(), N = h.setup.n_tx(), M = h.setup.n_rx();
  std::ostringstream text;
  text << "nx=" << h.grid.nx() << '\n'
       << "ny=" << h.grid.ny() << '\n'
       << "cell_size=" << fmt(h.grid.cell_size()) << '\n'
       << "origin_x=" << fmt(h.grid.origin().x) << '\n'
       << "origin_y=" << fmt(h.grid.origin().y) << '\n'
       << "k0=" << fmt(h.grid.k0()) << '\n'
       << "frequency=" << fmt(h.setup.frequency) << '\n'
       << "incidence=" << (h.incidence == Incidence::LineSource ? "line" : "plane") << '\n'
       << "n_tx=" << N << '\n'
       << "n_rx=" << M << '\n'
       << "tx=" << fmt_points(h.setup.tx) << '\n'
       << "rx=" << fmt_points(h.setup.rx) << '\n'
       << "snr_db=" << fmt(h.snr_db) << '\n'
       << "seed=" << h.seed << '\n'
       << "count=" << ds.size() << '\n';
  const std::string header = text.str();

  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  out.reserve(out.size() + ds.size() * (2 * P + N * M) * 16);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const DatasetSample& s = ds.samples[i];
    if (!(s.chi.grid == h.grid) || !(s.chi_bp.grid == h.grid) || s.measurements.rows() != N ||
        s.measurements.cols() != M) {
      throw ShapeError("encode_dataset: sample " + std::to_string(i) + " does not match the header");
    }
    for (int p = 0; p < P; ++p) put_c(out, s.chi.chi[p]);
    for (int n = 0; n < N; ++n) {
      for (int m = 0; m < M; ++m) put_c(out, s.measurements(n, m));
    }
    for (int p = 0; p < P; ++p) put_c(out, s.chi_bp.chi[p]);
  }
  return out;
}

ScatteringDataset decode_dataset(const std::string& bytes) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("dataset: bad magic (expected NISD)");
  in.skip(4);
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const std::uint32_t header_len = in.u32("header length");
  const std::string header = in.str(header_len, "header");

  std::map<std::string, std::string> kv;
  std::istringstream lines(header);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("dataset header: line without '=': " + line);
    const std::string key = line.substr(0, eq);
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw FormatError("dataset header: unknown key " + key);
    }
    if (!kv.emplace(key, line.substr(eq + 1)).second) throw FormatError("dataset header: duplicate key " + key);
  }
  for (const char* key : kKeys) {
    if (!kv.count(key)) throw FormatError(std::string("dataset header: missing key ") + key);
  }

  ScatteringDataset ds;
  DatasetHeader& h = ds.header;
  try {
    h.grid = Grid(static_cast<int>(parse_uint(kv["nx"], "nx")), static_cast<int>(parse_uint(kv["ny"], "ny")),
                  parse_double(kv["cell_size"], "cell_size"),
                  {parse_double(kv["origin_x"], "origin_x"), parse_double(kv["origin_y"], "origin_y")},
                  parse_double(kv["k0"], "k0"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  }
  h.setup.frequency = parse_double(kv["frequency"], "frequency");
  if (kv["incidence"] == "line") {
    h.incidence = Incidence::LineSource;
  } else if (kv["incidence"] == "plane") {
    h.incidence = Incidence::PlaneWave;
  } else {
    throw FormatError("dataset header: unknown incidence " + kv["incidence"]);
  }
  h.setup.tx = parse_points(kv["tx"], "tx");
  h.setup.rx = parse_points(kv["rx"], "rx");
  if (h.setup.tx.size() != parse_uint(kv["n_tx"], "n_tx") || h.setup.rx.size() != parse_uint(kv["n_rx"], "n_rx")) {
    throw FormatError("dataset header: antenna lists disagree with n_tx/n_rx");
  }
  h.snr_db = parse_double(kv["snr_db"], "snr_db");
  h.seed = parse_uint(kv["seed"], "seed");
  const std::uint64_t count = parse_uint(kv["count"], "count");

  const std::size_t P = h.grid.size(), N = h.setup.tx.size(), M = h.setup.rx.size();
  const std::size_t per_sample = (2 * P + N * M) * 16;
  if (in.remaining() != count * per_sample) {
    throw FormatError("dataset payload size mismatch: expected " + std::to_string(count * per_sample) +
                      " bytes for " + std::to_string(count) + " samples, got " + std::to_string(in.remaining()));
  }
  ds.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DatasetSample s{ContrastMap(h.grid), CMatrix(N, M), ContrastMap(h.grid)};
    for (std::size_t p = 0; p < P; ++p) s.chi.chi[p] = in.c();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) s.measurements(n, m) = in.c();
    }
    for (std::size_t p = 0; p < P; ++p) s.chi_bp.chi[p] = in.c();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const ScatteringDataset& dataset, const std::string& path) {
  spill(encode_dataset(dataset), path);
}

ScatteringDataset read_dataset(const std::string& path) { return decode_dataset(slurp(path)); }

}  // namespace nis
