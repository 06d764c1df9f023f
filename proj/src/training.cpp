#include "nis/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "nis/parallel.hpp"
#include "nis/rng.hpp"

namespace nis {

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(const CascadeModel& shape, LayerRates rates) : rates_(rates) {
  const std::size_t n = 2 * shape.parameter_count();
  m_.assign(n, 0.0);
  v_.assign(n, 0.0);
}

void AdamOptimizer::step(CascadeModel& params, const CascadeModel& grads) {
  if (2 * params.parameter_count() != m_.size() || 2 * grads.parameter_count() != m_.size()) {
    throw ShapeError("AdamOptimizer: parameter shapes do not match the optimizer state");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  std::size_t slot = 0;
  auto update = [&](double& p, double g, double lr) {
    double& m = m_[slot];
    double& v = v_[slot];
    ++slot;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + kEpsilon);
  };
  auto update_array = [&](std::vector<Complex>& p, const std::vector<Complex>& g, double lr) {
    if (p.size() != g.size()) throw ShapeError("AdamOptimizer: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      double re = p[i].real();
      double im = p[i].imag();
      update(re, g[i].real(), lr);
      update(im, g[i].imag(), lr);
      p[i] = Complex(re, im);
    }
  };
  for (std::size_t k = 0; k < params.modules.size(); ++k) {
    for (int l = 0; l < CnnModule::kLayers; ++l) {
      update_array(params.modules[k].layer(l).weights, grads.modules[k].layer(l).weights, rates_[l]);
      update_array(params.modules[k].layer(l).biases, grads.modules[k].layer(l).biases, rates_[l]);
    }
  }
}

void AdamOptimizer::halve_rates() {
  for (double& r : rates_) r *= 0.5;
}

// ---------------------------------------------------------------------------
// History

std::string TrainingHistory::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_loss,lr_conv1,lr_conv2,lr_conv3,stage,module\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.rates[0] << ',' << r.rates[1] << ','
       << r.rates[2] << ',' << r.stage << ',' << r.module << '\n';
  }
  return os.str();
}

void TrainingHistory::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_csv();
  if (!out) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Training loop

void TrainConfig::validate() const {
  if (pretrain_epochs < 0 || finetune_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (double r : learning_rates) {
    if (!(r > 0.0)) throw ConfigError("learning rates must be positive");
  }
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
}

namespace {

struct Samples {
  std::vector<ComplexTensor> inputs;
  std::vector<ComplexTensor> targets;
};

Samples split_pairs(const std::vector<TrainingPair>& set) {
  Samples s;
  for (const auto& p : set) {
    if (!p.input.same_shape(p.target)) {
      throw ShapeError("training pair shapes differ: " + p.input.shape_string() + " vs " + p.target.shape_string());
    }
    s.inputs.push_back(p.input);
    s.targets.push_back(p.target);
  }
  return s;
}

double mean_loss_of(const CascadeModel& model, const Samples& s) {
  std::vector<double> losses(s.inputs.size());
  parallel_for(s.inputs.size(), [&](std::size_t i) {
    losses[i] = euclidean_loss(cascade_forward(model, s.inputs[i]), s.targets[i]);
  });
  return s.inputs.empty() ? 0.0 : std::accumulate(losses.begin(), losses.end(), 0.0) / losses.size();
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::uint64_t tag) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, tag);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

// Trains `model` in place for `epochs`; appends one history row per epoch.
void run_stage(CascadeModel& model, const Samples& train, const Samples& val, int epochs, const TrainConfig& cfg,
               int stage, int module, int& epoch_counter, TrainingHistory& history,
               const std::function<void(const HistoryRow&)>& on_epoch) {
  AdamOptimizer adam(model, cfg.learning_rates);
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const std::size_t n = train.inputs.size();
  for (int e = 0; e < epochs; ++e) {
    const std::uint64_t tag = (static_cast<std::uint64_t>(stage) << 48) ^
                              (static_cast<std::uint64_t>(module + 1) << 32) ^ static_cast<std::uint64_t>(e);
    const auto order = shuffled(n, cfg.seed, tag);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, n - start);
      std::vector<CascadeModel> grads(count);
      std::vector<double> losses(count);
      parallel_for(count, [&](std::size_t j) {
        const std::size_t i = order[start + j];
        CascadeTape tape;
        const ComplexTensor out = cascade_forward(model, train.inputs[i], &tape);
        losses[j] = euclidean_loss(out, train.targets[i]);
        grads[j] = cascade_backward(model, tape, euclidean_loss_grad(out, train.targets[i]), false).params;
      });
      CascadeModel total = model.zeros_like();
      for (std::size_t j = 0; j < count; ++j) {
        total.add_scaled(grads[j], 1.0 / static_cast<double>(count));
        loss_sum += losses[j];
      }
      adam.step(model, total);
    }

    HistoryRow row;
    row.epoch = ++epoch_counter;
    row.train_loss = loss_sum / static_cast<double>(n);
    row.val_loss = mean_loss_of(model, val);
    row.rates = adam.rates();
    row.stage = stage;
    row.module = module;
    history.rows.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.val_loss < best) {
      best = row.val_loss;
      stale = 0;
    } else if (++stale >= cfg.plateau_patience) {
      adam.halve_rates();
      stale = 0;
    }
  }
}

}  // namespace

double mean_loss(const CascadeModel& model, const std::vector<TrainingPair>& set) {
  return mean_loss_of(model, split_pairs(set));
}

TrainResult train(const CascadeModel& init, const std::vector<TrainingPair>& train_set,
                  const std::vector<TrainingPair>& val_set, const TrainConfig& config,
                  const std::function<void(const HistoryRow&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ConfigError("train: training split is empty");
  if (val_set.empty()) throw ConfigError("train: validation split is empty");
  if (init.modules.empty()) throw ConfigError("train: model has no modules");

  TrainResult result{init, {}};
  const Samples train = split_pairs(train_set);
  const Samples val = split_pairs(val_set);
  int epoch_counter = 0;

  if (config.pretrain_epochs > 0) {
    Samples stage_train = train;
    Samples stage_val = val;
    for (std::size_t k = 0; k < result.model.modules.size(); ++k) {
      CascadeModel single;
      single.modules.push_back(result.model.modules[k]);
      run_stage(single, stage_train, stage_val, config.pretrain_epochs, config, 1, static_cast<int>(k),
                epoch_counter, result.history, on_epoch);
      result.model.modules[k] = single.modules.front();
      if (k + 1 == result.model.modules.size()) break;
      // Feed the next module with this module's output.
      for (Samples* s : {&stage_train, &stage_val}) {
        parallel_for(s->inputs.size(), [&](std::size_t i) {
          s->inputs[i] = module_forward(single.modules.front(), s->inputs[i]);
        });
      }
    }
  }
  run_stage(result.model, train, val, config.finetune_epochs, config, 2, -1, epoch_counter, result.history, on_epoch);
  return result;
}

}  // namespace nis
