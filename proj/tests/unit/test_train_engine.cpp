#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "microresnet/checkpoint.hpp"
#include "microresnet/errors.hpp"
#include "microresnet/metrics.hpp"
#include "microresnet/train.hpp"

using namespace microresnet;
namespace fs = std::filesystem;
using TF = Tensor<float>;

namespace {

const char* kTinyArch = "Conv 8\nAvg 2\nBB 8\nAvg 4\nFC 4\n";

struct Fixture {
  Dataset train = synth_dataset(24, 4, 8, 1);
  Dataset val = synth_dataset(8, 4, 8, 2);
  TrainConfig cfg;
  Fixture() {
    cfg.learning_rate = 0.02;
    cfg.batch_size = 8;
    cfg.epochs = 4;
    cfg.seed = 3;
    cfg.augment = AugmentConfig::for_side(8);
  }
  TrainingState fresh() const {
    return init_training(parse_arch(kTinyArch), ImageShape{3, 8, 8}, cfg, compute_normalization(train));
  }
};

std::vector<TF> snapshot(const Network<float>& net) {
  std::vector<TF> out;
  for (const auto* p : net.parameters()) out.push_back(*p);
  return out;
}

bool same_params(const Network<float>& net, const std::vector<TF>& before) {
  const auto now = net.parameters();
  for (std::size_t i = 0; i < now.size(); ++i)
    if (!same_values(*now[i], before[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("sgd_step examples") {
  TF w(Shape{1}, 1.0f);
  std::vector<TF*> params{&w};
  std::vector<TF> grads{TF(Shape{1}, 0.5f)};
  SgdState<float> state;
  sgd_step<float>(params, grads, state, 0.1, 0.0, 0.0);
  CHECK(w[0] == doctest::Approx(0.95));

  Tensor<double> w2(Shape{1}, 0.0);
  std::vector<Tensor<double>*> p2{&w2};
  std::vector<Tensor<double>> g2{Tensor<double>(Shape{1}, 1.0)};
  SgdState<double> s2;
  sgd_step<double>(p2, g2, s2, 0.1, 0.9, 0.0);
  CHECK(w2[0] == doctest::Approx(-0.1).epsilon(1e-12));
  sgd_step<double>(p2, g2, s2, 0.1, 0.9, 0.0);
  CHECK(w2[0] == doctest::Approx(-0.29).epsilon(1e-12));
  CHECK(s2.velocity[0][0] == doctest::Approx(1.9).epsilon(1e-12));

  std::vector<Tensor<double>> zero{Tensor<double>(Shape{1}, 0.0)};
  const double before = w2[0];
  sgd_step<double>(p2, zero, s2, 0.1, 0.9, 0.0);
  CHECK(s2.velocity[0][0] == doctest::Approx(1.71).epsilon(1e-12));
  CHECK(w2[0] == doctest::Approx(before - 0.171).epsilon(1e-12));

  Tensor<double> w3(Shape{2}, 1.0);
  std::vector<Tensor<double>*> p3{&w3};
  std::vector<Tensor<double>> zero3{Tensor<double>(Shape{2}, 0.0)};
  SgdState<double> s3;
  sgd_step<double>(p3, zero3, s3, 0.1, 0.9, 0.0);
  CHECK(w3[0] == 1.0);
  sgd_step<double>(p3, zero3, s3, 0.1, 0.0, 0.5);
  CHECK(w3[0] == doctest::Approx(0.95));

  std::vector<Tensor<double>> wrong{Tensor<double>(Shape{3}, 0.0)};
  CHECK_THROWS_AS(sgd_step<double>(p3, wrong, s3, 0.1, 0.9, 0.0), ShapeError);
}

TEST_CASE("train_epoch with zero learning rate leaves parameters untouched") {
  Fixture f;
  TrainingState state = f.fresh();
  const auto before = snapshot(state.network);
  BatchOptions opts{8, true, f.cfg.augment, f.cfg.seed, state.normalization, 1};
  BatchIterator batches(f.train, opts, 0);
  train_epoch(state.network, state.optimizer, batches, f.cfg, 0.0, state.rng);
  CHECK(same_params(state.network, before));
}

TEST_CASE("single-batch training loss strictly decreases") {
  Fixture f;
  f.cfg.learning_rate = 0.01;
  f.cfg.augment.reset();
  const Dataset one = f.train.head(8);
  TrainingState state = init_training(parse_arch("Conv 8\nAvg 4\nFC 4\n"), ImageShape{3, 8, 8}, f.cfg,
                                      compute_normalization(one));
  BatchOptions opts{8, false, std::nullopt, 0, state.normalization, 1};
  double previous = INFINITY;
  for (std::size_t epoch = 0; epoch < 10; ++epoch) {
    BatchIterator batches(one, opts, epoch);
    const EpochStats stats = train_epoch(state.network, state.optimizer, batches, f.cfg, 0.01, state.rng);
    CHECK(stats.loss < previous);
    previous = stats.loss;
  }
}

TEST_CASE("train_epoch aborts on a non-finite loss") {
  Fixture f;
  TrainingState state = f.fresh();
  for (auto* p : state.network.parameters()) p->fill(1e30f);
  BatchOptions opts{8, false, std::nullopt, 0, state.normalization, 1};
  BatchIterator batches(f.train, opts, 0);
  try {
    train_epoch(state.network, state.optimizer, batches, f.cfg, 0.01, state.rng);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}

TEST_CASE("argmax and evaluate") {
  TF onehot(Shape{3, 4}, 0.0f);
  onehot[0 * 4 + 2] = 1.0f;
  onehot[1 * 4 + 0] = 1.0f;
  onehot[2 * 4 + 3] = 1.0f;
  CHECK(argmax_rows(onehot) == std::vector<int>{2, 0, 3});
  CHECK(argmax_rows(TF(Shape{2, 5}, 0.25f)) == std::vector<int>{0, 0});

  TF four(Shape{4, 2}, {0.9f, 0.1f, 0.2f, 0.8f, 0.7f, 0.3f, 0.6f, 0.4f});
  const std::vector<int> labels{0, 1, 0, 1};
  const auto pred = argmax_rows(four);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 4; ++i) correct += pred[i] == labels[i];
  CHECK(correct / 4.0 == 0.75);

  // Zero weights give constant logits, so every prediction is class 0.
  const Dataset ds = synth_dataset(20, 4, 8, 7);
  Network<float> zero;
  zero.append(LinearLayer<float>::create(3 * 8 * 8, 4));
  const EpochStats stats = evaluate(zero, ds, 6, Normalization::identity(3));
  CHECK(stats.accuracy == doctest::Approx(0.25));
  CHECK(stats.loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("evaluate neither mutates parameters nor consumes training draws") {
  Fixture f;
  TrainingState state = f.fresh();
  const auto before = snapshot(state.network);
  const Rng rng_before = state.rng;
  const EpochStats a = evaluate(state.network, f.val, 3, state.normalization);
  const EpochStats b = evaluate(state.network, f.val, 8, state.normalization);
  CHECK(same_params(state.network, before));
  CHECK(state.rng == rng_before);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-5));
}

TEST_CASE("fit emits one row per epoch and is deterministic") {
  Fixture f;
  f.cfg.epochs = 3;
  TrainingState s1 = f.fresh();
  std::size_t callbacks = 0;
  const auto rows = fit(s1, f.train, f.val, f.cfg, [&](const MetricsRow&, const TrainingState&) { ++callbacks; });
  REQUIRE(rows.size() == 3);
  CHECK(callbacks == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].epoch == i + 1);
    CHECK(rows[i].gap == rows[i].train_acc - rows[i].val_acc);
    CHECK(rows[i].train_acc >= 0.0);
    CHECK(rows[i].val_acc <= 1.0);
  }
  CHECK(s1.epoch == 3);
  TrainingState s2 = f.fresh();
  CHECK(fit(s2, f.train, f.val, f.cfg) == rows);
  CHECK(encode_checkpoint(make_checkpoint(s1)) == encode_checkpoint(make_checkpoint(s2)));
}

TEST_CASE("resuming from a checkpoint matches the uninterrupted run") {
  Fixture f;
  TrainingState full = f.fresh();
  const auto all_rows = fit(full, f.train, f.val, f.cfg);

  TrainConfig half = f.cfg;
  half.epochs = 2;
  TrainingState first = f.fresh();
  fit(first, f.train, f.val, half);
  const auto bytes = encode_checkpoint(make_checkpoint(first));
  TrainingState resumed = restore_training(decode_checkpoint(bytes));
  CHECK(resumed.epoch == 2);
  const auto rest = fit(resumed, f.train, f.val, f.cfg);
  REQUIRE(rest.size() == 2);
  CHECK(rest[0] == all_rows[2]);
  CHECK(rest[1] == all_rows[3]);
  CHECK(encode_checkpoint(make_checkpoint(resumed)) == encode_checkpoint(make_checkpoint(full)));
}

TEST_CASE("checkpoint round trip and corruption") {
  Fixture f;
  f.cfg.epochs = 1;
  TrainingState state = f.fresh();
  fit(state, f.train, f.val, f.cfg);
  const Checkpoint ckpt = make_checkpoint(state);
  const auto bytes = encode_checkpoint(ckpt);
  REQUIRE(bytes.size() > 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MRNC");
  CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);

  const fs::path path = fs::temp_directory_path() / "microresnet_test.ckpt";
  save_checkpoint(ckpt, path);
  CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
  fs::remove(path);

  const TrainingState back = restore_training(ckpt);
  CHECK(back.arch == state.arch);
  CHECK(back.input == state.input);
  CHECK(back.rng == state.rng);
  CHECK(back.normalization.mean == state.normalization.mean);
  CHECK(same_params(back.network, snapshot(state.network)));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_checkpoint(bad_magic);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    decode_checkpoint(bad_version);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);

  Checkpoint mismatched = ckpt;
  mismatched.tensors[0].tensor = TF(Shape{1});
  CHECK_THROWS_AS(restore_training(mismatched), ShapeError);
}

TEST_CASE("metrics CSV") {
  const MetricsRow row = MetricsRow::make(1, 2.5, 0.75, 3.0, 0.5);
  CHECK(row.gap == 0.25);
  CHECK(format_metrics_row(row) == "1,2.500000,0.750000,3.000000,0.500000,0.250000");
  std::istringstream in(std::string(kMetricsHeader) + "\n" + format_metrics_row(row) + "\n");
  const auto rows = parse_metrics_csv(in);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].val_acc == 0.5);
  std::istringstream bad("epoch,loss\n1,2\n");
  CHECK_THROWS_AS(parse_metrics_csv(bad), FormatError);
  std::istringstream bad_row(std::string(kMetricsHeader) + "\n1,2,3\n");
  CHECK_THROWS_AS(parse_metrics_csv(bad_row), FormatError);
}

TEST_CASE("config validation and schedule") {
  TrainConfig cfg;
  CHECK(cfg.momentum == 0.9);
  CHECK(cfg.weight_decay == 0.0);
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.learning_rate = 0.1;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.epochs = 10;
  cfg.lr_schedule = StepSchedule{0.1, 3};
  CHECK(cfg.learning_rate_at(1) == doctest::Approx(0.1));
  CHECK(cfg.learning_rate_at(3) == doctest::Approx(0.1));
  CHECK(cfg.learning_rate_at(4) == doctest::Approx(0.01));
  CHECK(cfg.learning_rate_at(7) == doctest::Approx(0.001));
}
