#include "microresnet/train.hpp"

#include <cmath>
#include <string>

#include "microresnet/errors.hpp"
#include "microresnet/ops.hpp"
#include "microresnet/tape.hpp"

namespace microresnet {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValueError("learning rate must be a finite positive number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValueError("weight decay must be non-negative");
  if (batch_size == 0) throw ValueError("batch size must be at least 1");
  if (epochs == 0) throw ValueError("epochs must be at least 1");
  if (workers == 0) throw ValueError("workers must be at least 1");
  if (lr_schedule && (lr_schedule->every == 0 || !(lr_schedule->factor > 0.0))) {
    throw ValueError("step schedule needs a positive factor and period");
  }
  if (augment) augment->validate();
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (!lr_schedule || epoch == 0) return learning_rate;
  const auto steps = static_cast<double>((epoch - 1) / lr_schedule->every);
  return learning_rate * std::pow(lr_schedule->factor, steps);
}

template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, SgdState<T>& state, double lr,
              double momentum, double weight_decay) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.velocity.empty()) {
    for (const auto* p : params) state.velocity.emplace_back(p->shape());
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: optimizer state holds " + std::to_string(state.velocity.size()) +
                     " buffers for " + std::to_string(params.size()) + " parameters");
  }
  const T mu = static_cast<T>(momentum);
  const T eta = static_cast<T>(lr);
  const T decay = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = *params[i];
    const Tensor<T>& g = grads[i];
    Tensor<T>& v = state.velocity[i];
    if (g.shape() != w.shape() || v.shape() != w.shape()) {
      throw ShapeError("sgd_step: parameter " + std::to_string(i) + " has shape " + to_string(w.shape()) +
                       " but gradient " + to_string(g.shape()) + " and velocity " + to_string(v.shape()));
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = mu * v[k] + g[k] + decay * w[k];
      w[k] -= eta * v[k];
    }
  }
}

std::vector<int> argmax_rows(const Tensor<float>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected [N,K] logits, got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.data().data() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

namespace {

std::size_t count_correct(const Tensor<float>& logits, const std::vector<int>& labels) {
  const auto predicted = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return correct;
}

}  // namespace

EpochStats train_epoch(Network<float>& net, SgdState<float>& optimizer, BatchIterator& batches,
                       const TrainConfig& cfg, double learning_rate, Rng& rng) {
  double loss_total = 0.0;
  std::size_t batch_index = 0;
  std::size_t correct = 0;
  std::size_t seen = 0;
  while (auto batch = batches.next()) {
    Tape<float> tape;
    ForwardContext<float> ctx;
    ctx.mode = Mode::train;
    ctx.rng = &rng;
    ctx.tape = &tape;
    const Tensor<float> logits = net.forward(batch->x, ctx);
    const Tensor<float> loss = softmax_cross_entropy(logits, std::span<const int>(batch->y), &tape);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite loss at batch " + std::to_string(batch_index));
    }
    const Gradients<float> grads = tape.backward(loss);
    std::vector<Tensor<float>> param_grads;
    param_grads.reserve(ctx.bound.size());
    for (const NodeId& id : ctx.bound) param_grads.push_back(grads.of(id));
    auto params = net.parameters();
    sgd_step<float>(params, param_grads, optimizer, learning_rate, cfg.momentum, cfg.weight_decay);

    loss_total += value;
    correct += count_correct(logits, batch->y);
    seen += batch->y.size();
    ++batch_index;
  }
  if (batch_index == 0) throw DataError("training epoch produced no batches");
  return {loss_total / static_cast<double>(batch_index), static_cast<double>(correct) / static_cast<double>(seen)};
}

EpochStats evaluate(const Network<float>& net, const Dataset& ds, std::size_t batch_size,
                    const Normalization& normalization) {
  BatchOptions options;
  options.batch_size = batch_size;
  options.shuffle = false;
  options.normalization = normalization;
  BatchIterator batches(ds, options, 0);
  double loss_total = 0.0;
  std::size_t correct = 0;
  while (auto batch = batches.next()) {
    const Tensor<float> logits = net.predict(batch->x);
    const Tensor<float> loss = softmax_cross_entropy(logits, std::span<const int>(batch->y));
    loss_total += static_cast<double>(loss.item()) * static_cast<double>(batch->y.size());
    correct += count_correct(logits, batch->y);
  }
  const auto n = static_cast<double>(ds.size());
  return {loss_total / n, static_cast<double>(correct) / n};
}

TrainingState init_training(const ArchSpec& arch, ImageShape input, const TrainConfig& cfg,
                            Normalization normalization) {
  cfg.validate();
  normalization.validate(input.channels);
  Rng init_rng = Rng::derive(cfg.seed, kInitStream);
  TrainingState state{arch, input, build_network<float>(arch, input, init_rng), {}, std::move(normalization),
                      Rng::derive(cfg.seed, kDropoutStream), 0};
  for (const auto* p : state.network.parameters()) state.optimizer.velocity.emplace_back(p->shape());
  return state;
}

std::vector<MetricsRow> fit(TrainingState& state, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.channels != state.input.channels || val.channels != state.input.channels) {
    throw ShapeError("dataset channels do not match the network input " + to_string(state.input));
  }
  std::vector<MetricsRow> rows;
  for (std::size_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    BatchOptions options;
    options.batch_size = cfg.batch_size;
    options.shuffle = true;
    options.augment = cfg.augment;
    options.seed = cfg.seed;
    options.normalization = state.normalization;
    options.workers = cfg.workers;
    BatchIterator batches(train, options, epoch);
    train_epoch(state.network, state.optimizer, batches, cfg, cfg.learning_rate_at(epoch), state.rng);
    state.epoch = epoch;
    const EpochStats train_stats = evaluate(state.network, train, cfg.batch_size, state.normalization);
    const EpochStats val_stats = evaluate(state.network, val, cfg.batch_size, state.normalization);
    rows.push_back(MetricsRow::make(epoch, train_stats.loss, train_stats.accuracy, val_stats.loss,
                                    val_stats.accuracy));
    if (on_epoch) on_epoch(rows.back(), state);
  }
  return rows;
}

template void sgd_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>, SgdState<float>&,
                              double, double, double);
template void sgd_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                               SgdState<double>&, double, double, double);

}  // namespace microresnet
