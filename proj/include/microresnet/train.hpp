#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "microresnet/arch.hpp"
#include "microresnet/data.hpp"
#include "microresnet/network.hpp"
#include "microresnet/rng.hpp"

namespace microresnet {

/// Multiply the learning rate by `factor` every `every` epochs.
struct StepSchedule {
  double factor = 0.1;
  std::size_t every = 30;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 128;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::optional<AugmentConfig> augment;
  std::optional<StepSchedule> lr_schedule;
  std::size_t workers = 1;

  void validate() const;
  /// Learning rate in effect during 1-based `epoch`.
  double learning_rate_at(std::size_t epoch) const;
};

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double gap = 0.0;  // train_acc - val_acc

  static MetricsRow make(std::size_t epoch, double train_loss, double train_acc, double val_loss, double val_acc) {
    return {epoch, train_loss, train_acc, val_loss, val_acc, train_acc - val_acc};
  }
  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Momentum buffers, one per parameter.
template <typename T>
struct SgdState {
  std::vector<Tensor<T>> velocity;
};

/// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, SgdState<T>& state, double lr,
              double momentum, double weight_decay);

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Index of the largest logit in each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor<float>& logits);

/// One pass over `batches` in train mode: forward, loss, backward and an SGD
/// step per batch. Loss is averaged over batches, accuracy over samples.
EpochStats train_epoch(Network<float>& net, SgdState<float>& optimizer, BatchIterator& batches,
                       const TrainConfig& cfg, double learning_rate, Rng& rng);

/// Eval-mode loss and top-1 accuracy. Uses no tape and no randomness.
EpochStats evaluate(const Network<float>& net, const Dataset& ds, std::size_t batch_size,
                    const Normalization& normalization);

/// Everything needed to continue a run.
struct TrainingState {
  ArchSpec arch;
  ImageShape input;
  Network<float> network;
  SgdState<float> optimizer;
  Normalization normalization;
  Rng rng;
  std::size_t epoch = 0;  // completed epochs
};

/// Fresh state: network built and initialized from the config seed.
TrainingState init_training(const ArchSpec& arch, ImageShape input, const TrainConfig& cfg,
                            Normalization normalization);

using EpochCallback = std::function<void(const MetricsRow&, const TrainingState&)>;

/// Runs epochs state.epoch + 1 .. cfg.epochs, evaluating on both splits after
/// each one. No early stopping.
std::vector<MetricsRow> fit(TrainingState& state, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

extern template void sgd_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                                     SgdState<float>&, double, double, double);
extern template void sgd_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                                      SgdState<double>&, double, double, double);

}  // namespace microresnet
