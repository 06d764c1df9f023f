#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nis/cascade.hpp"

namespace nis {

/// Per-layer learning rates, indexed by position inside a module (conv1, conv2, conv3).
using LayerRates = std::array<double, CnnModule::kLayers>;

/// Adam over every real and imaginary parameter component.
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamOptimizer(const CascadeModel& shape, LayerRates rates);

  void step(CascadeModel& params, const CascadeModel& grads);
  void halve_rates();

  const LayerRates& rates() const { return rates_; }
  long steps() const { return steps_; }

 private:
  LayerRates rates_;
  long steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TrainingPair {
  ComplexTensor input;   // back-propagation image, 1 x H x W
  ComplexTensor target;  // ground-truth contrast, 1 x H x W
};

struct TrainConfig {
  int pretrain_epochs = 30;
  int finetune_epochs = 71;
  int batch_size = 32;
  LayerRates learning_rates{1e-4, 1e-4, 1e-5};
  /// Rates halve after this many epochs without a new best validation loss.
  int plateau_patience = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

struct HistoryRow {
  int epoch = 0;  // counts across both stages, from 1
  double train_loss = 0.0;
  double val_loss = 0.0;
  LayerRates rates{};
  int stage = 0;    // 1 = per-module pretraining, 2 = end-to-end
  int module = -1;  // trained module in stage 1, -1 in stage 2
};

struct TrainingHistory {
  std::vector<HistoryRow> rows;

  /// Columns: epoch,train_loss,val_loss,lr_conv1,lr_conv2,lr_conv3,stage,module.
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

struct TrainResult {
  CascadeModel model;
  TrainingHistory history;
};

/// Stage 1 trains module k alone on the outputs of the already trained modules
/// 0..k-1, against the ground truth. Stage 2 fine-tunes the whole cascade.
/// Mini-batch gradients are summed in sample order, so results do not depend
/// on the thread count.
TrainResult train(const CascadeModel& init, const std::vector<TrainingPair>& train_set,
                  const std::vector<TrainingPair>& val_set, const TrainConfig& config,
                  const std::function<void(const HistoryRow&)>& on_epoch = {});

/// Mean euclidean_loss of the full cascade over a set.
double mean_loss(const CascadeModel& model, const std::vector<TrainingPair>& set);

}  // namespace nis
