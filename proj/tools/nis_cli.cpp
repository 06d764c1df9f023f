// nis: dataset generation, classical inversion, cascade training and evaluation.

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nis/datapipe.hpp"
#include "nis/linimg.hpp"
#include "nis/metrics.hpp"
#include "nis/nlsolve.hpp"
#include "nis/parallel.hpp"
#include "nis/rng.hpp"
#include "nis/training.hpp"
#include "nis/weights_io.hpp"

namespace fs = std::filesystem;
using namespace nis;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Prints "timing: <phase> <seconds> s" to stderr when destroyed.
class PhaseTimer {
 public:
  explicit PhaseTimer(std::string phase) : phase_(std::move(phase)), start_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::cerr << "timing: " << phase_ << ' ' << std::fixed << std::setprecision(3) << s << " s\n";
    std::cerr.unsetf(std::ios::floatfield);
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  std::string phase_;
  std::chrono::steady_clock::time_point start_;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

bool parse_double(const std::string& s, double& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

// "NxM" -> (N, M).
bool parse_grid(const std::string& s, int& nx, int& ny) {
  const std::size_t x = s.find('x');
  if (x == std::string::npos) return false;
  const char* a = s.data();
  const auto r1 = std::from_chars(a, a + x, nx);
  const auto r2 = std::from_chars(a + x + 1, a + s.size(), ny);
  return r1.ec == std::errc() && r1.ptr == a + x && r2.ec == std::errc() && r2.ptr == a + s.size() && nx > 0 &&
         ny > 0;
}

const CLI::Validator kGridSpec(
    [](std::string& s) {
      int nx = 0, ny = 0;
      return parse_grid(s, nx, ny) ? std::string() : "expected NxM with positive integers, got '" + s + "'";
    },
    "NxM");

const CLI::Validator kSnr(
    [](std::string& s) {
      double v = 0.0;
      if (!parse_double(s, v) || std::isnan(v) || v == -std::numeric_limits<double>::infinity()) {
        return "expected a number of dB or 'inf', got '" + s + "'";
      }
      return std::string();
    },
    "DB|inf");

const CLI::Validator kSource(
    [](std::string& s) {
      if (s == "synth") return std::string();
      if (s.rfind("idx:", 0) == 0 && s.size() > 4) {
        return fs::is_regular_file(s.substr(4)) ? std::string() : "IDX file not found: " + s.substr(4);
      }
      return "expected 'synth' or 'idx:PATH', got '" + s + "'";
    },
    "synth|idx:PATH");

// Output file or prefix whose directory must already exist.
const CLI::Validator kOutPath(
    [](std::string& s) {
      if (s.empty()) return std::string("empty output path");
      fs::path parent = fs::path(s).parent_path();
      if (parent.empty()) parent = ".";
      return fs::is_directory(parent) ? std::string() : "output directory does not exist: " + parent.string();
    },
    "PATH");

void add_common(CLI::App* sub, int& threads, std::string& config) {
  sub->add_option("--config", config, "Read flags from a 'key = value' file (# comments); command-line flags win")
      ->check(CLI::ExistingFile);
  sub->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Rewrites "nis <sub> ... --config FILE ..." as "nis <sub> <file flags> ...". File
// entries come first so that command-line flags, parsed later, take precedence.
// Returns an error message for unreadable files, malformed lines or unknown keys.
std::string expand_config(int argc, char** argv, CLI::App& app, std::vector<std::string>& out) {
  out.assign(argv, argv + argc);
  if (argc < 2) return {};
  CLI::App* sub = app.get_subcommand_no_throw(argv[1]);
  if (sub == nullptr) return {};
  std::string path;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) path = argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) path = arg.substr(9);
  }
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) return "cannot read config file " + path;
  std::vector<std::string> injected;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    const std::string where = path + ":" + std::to_string(line_no);
    if (eq == std::string::npos) return where + ": expected 'key = value'";
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key == "config" || key == "help" || sub->get_option_no_throw("--" + key) == nullptr) {
      return where + ": unknown key '" + key + "' for " + sub->get_name();
    }
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  out.insert(out.begin() + 2, injected.begin(), injected.end());
  return {};
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string grid = "32x32";
  double cells_per_wavelength = config::kDeskCells / config::kDomainWavelengths;
  int tx = config::kDeskTransceivers;
  int rx = config::kDeskTransceivers;
  double radius_wavelengths = config::kRingRadiusWavelengths;
  int count = 100;
  std::string source = "synth";
  double eps_r = config::kPaperEpsR;
  int threshold = kDefaultThreshold;
  std::string snr = "inf";
  std::uint64_t seed = 1;
  std::string out;
};

int run_generate(const GenerateArgs& a) {
  int nx = 0, ny = 0;
  parse_grid(a.grid, nx, ny);
  double snr = 0.0;
  parse_double(a.snr, snr);
  const double lambda = config::kWavelength;
  const Grid grid = Grid::centered(nx, ny, lambda / a.cells_per_wavelength, 2.0 * kPi / lambda);
  const MeasurementSetup setup =
      make_ring_setup(a.tx, a.rx, a.radius_wavelengths * lambda, config::frequency_for(lambda));
  validate_pairing(grid, setup);
  const Complex chi_value(a.eps_r - 1.0, 0.0);

  std::vector<ContrastMap> shapes;
  {
    PhaseTimer t("shapes");
    if (a.source == "synth") {
      shapes = synth_shapes(a.seed, grid, a.count, chi_value);
    } else {
      const auto images = read_idx(a.source.substr(4));
      if (images.size() < static_cast<std::size_t>(a.count)) {
        throw ConfigError("IDX file holds " + std::to_string(images.size()) + " images, " + std::to_string(a.count) +
                          " requested");
      }
      // Seeded draw without replacement.
      std::vector<std::size_t> order(images.size());
      std::iota(order.begin(), order.end(), 0);
      RngStream rng(a.seed, 0x696478ULL);
      for (std::size_t i = 0; i < static_cast<std::size_t>(a.count); ++i) {
        std::swap(order[i], order[i + rng.below(order.size() - i)]);
        shapes.push_back(
            image_to_contrast(images[order[i]], grid, chi_value, static_cast<std::uint8_t>(a.threshold)));
      }
    }
  }
  ScatteringDataset ds;
  {
    PhaseTimer t("simulate");
    ds = build_dataset(shapes, grid, setup, snr, a.seed);
  }
  {
    PhaseTimer t("write");
    write_dataset(ds, a.out);
  }
  std::cout << "generated " << ds.size() << " samples, grid " << nx << "x" << ny << ", snr " << a.snr
            << " dB -> " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------------ invert

struct InvertArgs {
  std::string method = "bp";
  std::string data;
  int index = 0;
  int iters = 0;
  double tau = 0.0;
  double eps = 0.0;
  std::string transform = "identity";
  std::string out;
};

const DatasetSample& pick(const ScatteringDataset& ds, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= ds.size()) {
    throw ConfigError("sample index " + std::to_string(index) + " outside [0, " + std::to_string(ds.size()) + ")");
  }
  return ds.samples[index];
}

int run_invert(const InvertArgs& a) {
  ScatteringDataset ds;
  {
    PhaseTimer t("read");
    ds = read_dataset(a.data);
  }
  const DatasetSample& s = pick(ds, a.index);
  const Operators ops = [&] {
    PhaseTimer t("assemble");
    return assemble(ds.header.grid, ds.header.setup, ds.header.incidence);
  }();
  InversionTrace trace;
  ContrastMap chi(ds.header.grid);
  {
    PhaseTimer t(a.method);
    if (a.method == "bp") {
      chi = backpropagate(ops, s.measurements);
    } else {
      InversionConfig cfg;
      cfg.threshold_tau = a.tau;
      cfg.tikhonov_eps = a.eps;
      cfg.transform = a.transform == "haar" ? SparseTransform::Haar : SparseTransform::Identity;
      cfg.max_iters = a.iters > 0 ? a.iters : (a.method == "csi" ? 50 : 10);
      InversionResult r = a.method == "csi" ? csi_solve(ops, s.measurements, cfg)
                                            : dbim_prox_solve(ops, s.measurements, backpropagate(ops, s.measurements), cfg);
      chi = std::move(r.chi);
      trace = std::move(r.trace);
    }
  }
  const RealImage recon = normalize_for_display(chi);
  const SampleQuality q = evaluate(chi, s.chi);
  write_pgm(recon, a.out + ".pgm");
  write_pgm(normalize_for_display(s.chi), a.out + "_truth.pgm");
  trace.write_csv(a.out + "_trace.csv");

  std::cout << "method=" << a.method << " index=" << a.index << " iterations=" << trace.size();
  if (!trace.entries.empty()) {
    std::cout << " initial_residual=" << num(trace.initial_data_residual)
              << " final_residual=" << num(trace.entries.back().data_residual);
  }
  std::cout << " ssim=" << num(q.ssim) << " mse=" << num(q.mse) << "\n";
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string data;
  double val_frac = 0.1;
  double test_frac = 0.2;
  int modules = 3;
  int epochs = 101;
  int pretrain_epochs = -1;
  int batch = 32;
  double lr1 = 1e-4;
  double lr2 = 1e-4;
  double lr3 = 1e-5;
  int patience = 10;
  std::uint64_t seed = 1;
  std::string out;
  std::string history;
  std::string test_out;
};

std::vector<TrainingPair> pairs_of(const ScatteringDataset& ds) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(ds.size());
  for (const auto& s : ds.samples) pairs.push_back({to_tensor(s.chi_bp), to_tensor(s.chi)});
  return pairs;
}

int run_train(const TrainArgs& a) {
  ScatteringDataset ds;
  {
    PhaseTimer t("read");
    ds = read_dataset(a.data);
  }
  const double train_frac = 1.0 - a.val_frac - a.test_frac;
  const auto parts = split(ds, {train_frac, a.val_frac, a.test_frac}, a.seed);
  if (!a.test_out.empty()) write_dataset(parts[2], a.test_out);

  TrainConfig cfg;
  // The default schedule splits 101 epochs as 30 pretraining + 71 fine-tuning.
  cfg.pretrain_epochs = a.pretrain_epochs >= 0 ? a.pretrain_epochs
                                               : static_cast<int>(std::lround(a.epochs * 30.0 / 101.0));
  cfg.finetune_epochs = std::max(0, a.epochs - cfg.pretrain_epochs);
  cfg.batch_size = a.batch;
  cfg.learning_rates = {a.lr1, a.lr2, a.lr3};
  cfg.plateau_patience = a.patience;
  cfg.seed = a.seed;
  cfg.validate();

  const CascadeModel init = init_cascade(ModuleSpec{}, a.modules, a.seed);
  TrainResult result;
  {
    PhaseTimer t("train");
    result = train(init, pairs_of(parts[0]), pairs_of(parts[1]), cfg, [](const HistoryRow& r) {
      std::cerr << "epoch " << r.epoch << " stage " << r.stage << " module " << r.module << " train_loss "
                << num(r.train_loss) << " val_loss " << num(r.val_loss) << "\n";
    });
  }
  save_weights(result.model, a.out);
  const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
  std::ofstream(history) << result.history.to_csv();
  std::cout << "trained " << a.modules << " modules on " << parts[0].size() << " samples (val " << parts[1].size()
            << ", test " << parts[2].size() << "), " << result.history.rows.size() << " epochs";
  if (!result.history.rows.empty()) std::cout << ", final val_loss " << num(result.history.rows.back().val_loss);
  std::cout << " -> " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string weights;
  std::string data;
  std::string out;
  int montage = 8;
};

// Rows of (truth | BP | network) display images, one-pixel white separators.
RealImage montage(const QualityReport& net, const QualityReport& bp, int rows) {
  rows = std::min<int>(rows, static_cast<int>(net.size()));
  if (rows == 0) return {};
  const int w = net.truths[0].width, h = net.truths[0].height;
  RealImage m;
  m.width = 3 * w + 2;
  m.height = rows * h + rows - 1;
  m.pixels.assign(static_cast<std::size_t>(m.width) * m.height, 1.0);
  for (int r = 0; r < rows; ++r) {
    const RealImage* tiles[3] = {&net.truths[r], &bp.reconstructions[r], &net.reconstructions[r]};
    for (int k = 0; k < 3; ++k) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          // Image rows run along +y; the first sample goes at the top.
          const int my = (rows - 1 - r) * (h + 1) + y;
          m.pixels[static_cast<std::size_t>(my) * m.width + k * (w + 1) + x] = tiles[k]->at(y, x);
        }
      }
    }
  }
  return m;
}

int run_eval(const EvalArgs& a) {
  CascadeModel model;
  ScatteringDataset ds;
  {
    PhaseTimer t("read");
    model = load_weights(a.weights);
    ds = read_dataset(a.data);
  }
  const Grid& grid = ds.header.grid;
  if (grid.nx() % 2 != 0 || grid.ny() % 2 != 0) {
    throw ShapeError("weights from " + a.weights + " cannot be applied to the " + std::to_string(grid.nx()) + "x" +
                     std::to_string(grid.ny()) + " grid of " + a.data + ": the cascade pools by 2 and needs even sides");
  }
  std::vector<ContrastMap> outputs(ds.size(), ContrastMap(grid));
  {
    PhaseTimer t("inference");
    parallel_for(ds.size(), [&](std::size_t i) {
      outputs[i] = to_contrast(cascade_forward(model, to_tensor(ds.samples[i].chi_bp)), grid);
    });
  }
  QualityReport net, bp;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    net.add(outputs[i], ds.samples[i].chi);
    bp.add(ds.samples[i].chi_bp, ds.samples[i].chi);
  }
  {
    PhaseTimer t("report");
    write_report(net, a.out + "_net");
    write_report(bp, a.out + "_bp");
    if (a.montage > 0 && ds.size() > 0) write_pgm(montage(net, bp, a.montage), a.out + "_grid.pgm");
  }
  std::cout << "eval n=" << ds.size() << " bp_ssim=" << num(bp.mean_ssim()) << " bp_mse=" << num(bp.mean_mse())
            << " net_ssim=" << num(net.mean_ssim()) << " net_mse=" << num(net.mean_mse()) << "\n";
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const NonConvergence*>(&e)) return "nonconvergence";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const Error*>(&e)) return "runtime";
  return "internal";
}

// One line, key=value, message quoted with embedded quotes escaped.
void report_error(const std::string& kind, const std::string& message, int code) {
  std::string quoted;
  for (char c : message) {
    if (c == '"' || c == '\\') quoted += '\\';
    quoted += c == '\n' ? ' ' : c;
  }
  std::cerr << "error: code=" << code << " kind=" << kind << " message=\"" << quoted << "\"\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural inverse scattering: datasets, classical inversion, cascade training and evaluation"};
  app.name("nis");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  int threads = 0;
  std::string config_file;

  GenerateArgs gen;
  CLI::App* g = app.add_subcommand("generate", "Simulate shapes and write a NISD dataset");
  g->option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_common(g, threads, config_file);
  g->add_option("--grid", gen.grid, "Cells per side")->check(kGridSpec);
  g->add_option("--cells-per-wavelength", gen.cells_per_wavelength, "Grid density")->check(CLI::PositiveNumber);
  g->add_option("--tx", gen.tx, "Transmitters on the ring")->check(CLI::PositiveNumber);
  g->add_option("--rx", gen.rx, "Receivers on the ring")->check(CLI::PositiveNumber);
  g->add_option("--radius-wavelengths", gen.radius_wavelengths, "Ring radius")->check(CLI::PositiveNumber);
  g->add_option("--count", gen.count, "Number of samples")->check(CLI::PositiveNumber);
  g->add_option("--source", gen.source, "Shape source")->check(kSource);
  g->add_option("--eps-r", gen.eps_r, "Relative permittivity of the objects")->check(CLI::PositiveNumber);
  g->add_option("--threshold", gen.threshold, "IDX binarization threshold")->check(CLI::Range(0, 255));
  g->add_option("--snr", gen.snr, "Measurement SNR in dB")->check(kSnr);
  g->add_option("--seed", gen.seed, "Seed for shapes and noise");
  g->add_option("--out", gen.out, "Output NISD file")->required()->check(kOutPath);

  InvertArgs inv;
  CLI::App* iv = app.add_subcommand("invert", "Reconstruct one sample with BP, CSI or proximal DBIM");
  iv->option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_common(iv, threads, config_file);
  iv->add_option("--method", inv.method, "Solver")->check(CLI::IsMember({"bp", "csi", "dbim"}));
  iv->add_option("--data", inv.data, "Input NISD file")->required()->check(CLI::ExistingFile);
  iv->add_option("--index", inv.index, "Sample index")->check(CLI::NonNegativeNumber);
  iv->add_option("--iters", inv.iters, "Iterations (0 = 50 for csi, 10 for dbim)")->check(CLI::NonNegativeNumber);
  iv->add_option("--tau", inv.tau, "Soft-threshold level (dbim)")->check(CLI::NonNegativeNumber);
  iv->add_option("--eps", inv.eps, "Tikhonov term (dbim)")->check(CLI::NonNegativeNumber);
  iv->add_option("--transform", inv.transform, "Sparsifying transform (dbim)")
      ->check(CLI::IsMember({"identity", "haar"}));
  iv->add_option("--out", inv.out, "Output prefix")->required()->check(kOutPath);

  TrainArgs tr;
  CLI::App* t = app.add_subcommand("train", "Two-stage training of the CNN cascade");
  t->option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_common(t, threads, config_file);
  t->add_option("--data", tr.data, "Input NISD file")->required()->check(CLI::ExistingFile);
  t->add_option("--val-frac", tr.val_frac, "Validation fraction")->check(CLI::Range(0.0, 1.0));
  t->add_option("--test-frac", tr.test_frac, "Held-out test fraction")->check(CLI::Range(0.0, 1.0));
  t->add_option("--modules", tr.modules, "CNN modules in the cascade")->check(CLI::Range(1, 64));
  t->add_option("--epochs", tr.epochs, "Total epochs (pretraining + fine-tuning)")->check(CLI::NonNegativeNumber);
  t->add_option("--pretrain-epochs", tr.pretrain_epochs, "Per-module pretraining epochs (-1 = 30/101 of --epochs)")
      ->check(CLI::Range(-1, 1 << 20));
  t->add_option("--batch", tr.batch, "Mini-batch size")->check(CLI::PositiveNumber);
  t->add_option("--lr-conv1", tr.lr1, "Learning rate of the first layer")->check(CLI::PositiveNumber);
  t->add_option("--lr-conv2", tr.lr2, "Learning rate of the second layer")->check(CLI::PositiveNumber);
  t->add_option("--lr-conv3", tr.lr3, "Learning rate of the last layer")->check(CLI::PositiveNumber);
  t->add_option("--patience", tr.patience, "Epochs without improvement before halving rates")
      ->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.seed, "Seed for split, initialization and shuffling");
  t->add_option("--out", tr.out, "Output NISW weights")->required()->check(kOutPath);
  t->add_option("--history", tr.history, "History CSV (default <out>.history.csv)")->check(kOutPath);
  t->add_option("--test-out", tr.test_out, "Write the held-out split as NISD")->check(kOutPath);

  EvalArgs ev;
  CLI::App* e = app.add_subcommand("eval", "Score cascade outputs and BP inputs against ground truth");
  e->option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_common(e, threads, config_file);
  e->add_option("--weights", ev.weights, "NISW weights")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "NISD dataset")->required()->check(CLI::ExistingFile);
  e->add_option("--montage", ev.montage, "Samples in the image grid (0 = none)")->check(CLI::NonNegativeNumber);
  e->add_option("--out", ev.out, "Output prefix")->required()->check(kOutPath);

  std::vector<std::string> args;
  if (const std::string err = expand_config(argc, argv, app, args); !err.empty()) {
    report_error("usage", err, kExitUsage);
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    report_error("usage", ex.what(), kExitUsage);
    std::cerr << "run with --help for usage\n";
    return kExitUsage;
  }

  if (tr.val_frac + tr.test_frac >= 1.0 && *t) {
    report_error("usage", "--val-frac + --test-frac must be below 1", kExitUsage);
    return kExitUsage;
  }
  set_thread_count(threads);
  try {
    if (*g) return run_generate(gen);
    if (*iv) return run_invert(inv);
    if (*t) return run_train(tr);
    return run_eval(ev);
  } catch (const std::exception& ex) {
    report_error(error_kind(ex), ex.what(), kExitRuntime);
    return kExitRuntime;
  }
}
