#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "microresnet/data.hpp"
#include "microresnet/errors.hpp"
#include "../support/oracles.hpp"

using namespace microresnet;
namespace fs = std::filesystem;

namespace {

ByteImage random_image(std::size_t c, std::size_t side, Rng& rng) {
  ByteImage img(c, side, side);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
  return img;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("microresnet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> batch_values(const Batch& b) { return {b.x.data().begin(), b.x.data().end()}; }

}  // namespace

TEST_CASE("augment: identity config and flip involution") {
  Rng rng(1);
  const ByteImage img = random_image(3, 64, rng);
  AugmentConfig off{0.0, 0.0, 56, 64};
  for (int i = 0; i < 20; ++i) CHECK(augment(img, off, rng) == img);

  AugmentConfig flip_only{1.0, 0.0, 56, 64};
  AugmentTrace trace;
  const ByteImage once = augment(img, flip_only, rng, &trace);
  CHECK(trace.flipped);
  CHECK(once == flip_horizontal(img));
  CHECK(augment(once, flip_only, rng) == img);
  CHECK(once.at(2, 5, 0) == img.at(2, 5, 63));
}

TEST_CASE("augment: crop window and output shape") {
  Rng rng(2);
  const ByteImage img = random_image(3, 64, rng);
  AugmentConfig always{0.0, 1.0, 56, 64};
  std::size_t max_top = 0, max_left = 0;
  for (int i = 0; i < 500; ++i) {
    AugmentTrace trace;
    const ByteImage out = augment(img, always, rng, &trace);
    CHECK(trace.cropped);
    CHECK(out.height == 64);
    CHECK(out.width == 64);
    max_top = std::max(max_top, trace.top);
    max_left = std::max(max_left, trace.left);
    CHECK(trace.top <= 8);
    CHECK(trace.left <= 8);
  }
  CHECK(max_top == 8);
  CHECK(max_left == 8);

  AugmentConfig too_big{0.5, 0.7, 65, 64};
  CHECK_THROWS_AS(augment(img, too_big, rng), ValueError);
  AugmentConfig bad_prob{1.5, 0.7, 56, 64};
  CHECK_THROWS_AS(augment(img, bad_prob, rng), ValueError);
}

TEST_CASE("augment: rescaled crop equals crop then rescale") {
  Rng rng(3);
  const ByteImage img = random_image(3, 32, rng);
  const AugmentConfig cfg{0.0, 1.0, 28, 32};
  AugmentTrace trace;
  const ByteImage out = augment(img, cfg, rng, &trace);
  CHECK(out == rescale_bilinear(crop(img, trace.top, trace.left, 28, 28), 32, 32));
}

TEST_CASE("augment: flip and crop frequencies over 10,000 draws") {
  // Binomial sigma at n=10,000 is 0.005 (p=0.5) and 0.0046 (p=0.7); bounds
  // are about 4 sigma.
  Rng rng(2024);
  const ByteImage img(3, 16, 16, 7);
  const AugmentConfig cfg = AugmentConfig::for_side(16);
  std::size_t flips = 0, crops = 0;
  for (int i = 0; i < 10000; ++i) {
    AugmentTrace trace;
    augment(img, cfg, rng, &trace);
    flips += trace.flipped;
    crops += trace.cropped;
  }
  CHECK(flips / 1e4 >= 0.48);
  CHECK(flips / 1e4 <= 0.52);
  CHECK(crops / 1e4 >= 0.68);
  CHECK(crops / 1e4 <= 0.72);
}

TEST_CASE("AugmentConfig defaults") {
  const AugmentConfig d;
  CHECK(d.flip_prob == 0.5);
  CHECK(d.crop_prob == 0.7);
  CHECK(d.crop_size == 56);
  CHECK(d.out_size == 64);
  CHECK(AugmentConfig::for_side(64).crop_size == 56);
  CHECK(AugmentConfig::for_side(32).crop_size == 28);
  CHECK(AugmentConfig::for_side(32).out_size == 32);
}

TEST_CASE("rescale_bilinear") {
  Rng rng(4);
  const ByteImage img = random_image(3, 56, rng);
  CHECK(rescale_bilinear(img, 56, 56) == img);

  const ByteImage constant(2, 7, 7, 93);
  for (std::size_t s : {1u, 3u, 7u, 16u, 64u}) CHECK(rescale_bilinear(constant, s, s) == ByteImage(2, s, s, 93));

  ByteImage ramp(1, 2, 2);
  ramp.pixels = {0, 255, 0, 255};
  const ByteImage up = rescale_bilinear(ramp, 4, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    const std::vector<std::uint8_t> row(up.pixels.begin() + y * 4, up.pixels.begin() + y * 4 + 4);
    CHECK(row == std::vector<std::uint8_t>{0, 64, 191, 255});
  }

  const ByteImage small = random_image(1, 9, rng);
  const std::vector<double> src(small.pixels.begin(), small.pixels.end());
  const ByteImage big = rescale_bilinear(small, 20, 13);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 13; ++x)
      CHECK(big.at(0, y, x) == std::lround(oracle::bilinear_pixel(src, 9, 9, 20, 13, y, x)));
}

TEST_CASE("normalize") {
  ByteImage white(1, 1, 1, 255);
  CHECK(normalize(white, Normalization::identity(1))[0] == 1.0f);
  const Normalization half{{0.5f}, {0.5f}};
  CHECK(std::fabs(normalize(ByteImage(1, 1, 1, 127), half)[0]) < 0.005f);
  CHECK(std::fabs(normalize(ByteImage(1, 1, 1, 128), half)[0]) < 0.005f);
  CHECK_THROWS_AS(normalize(white, Normalization{{0.0f}, {0.0f}}), ValueError);

  const Dataset ds = synth_dataset(64, 4, 16, 5);
  const Normalization stats = compute_normalization(ds);
  for (std::size_t c = 0; c < ds.channels; ++c) {
    double total = 0.0, total_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto values = normalize(ds.image(i), stats);
      const std::size_t plane = ds.height * ds.width;
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = values[c * plane + p];
        total += v;
        total_sq += v * v;
        ++n;
      }
    }
    const double mean = total / static_cast<double>(n);
    const double stddev = std::sqrt(total_sq / static_cast<double>(n) - mean * mean);
    CHECK(std::fabs(mean) < 1e-3);
    CHECK(stddev >= 0.999);
    CHECK(stddev <= 1.001);
  }
}

TEST_CASE("load_cifar10_bin") {
  const fs::path dir = temp_dir("cifar");
  std::vector<std::uint8_t> bytes(2 * 3073);
  bytes[0] = 3;
  bytes[3073] = 9;
  for (std::size_t i = 0; i < 3072; ++i) {
    bytes[1 + i] = static_cast<std::uint8_t>(i % 251);
    bytes[3074 + i] = static_cast<std::uint8_t>(255 - i % 256);
  }
  write_bytes(dir / "batch.bin", bytes);
  const Dataset ds = load_cifar10_bin({dir / "batch.bin"});
  CHECK(ds.size() == 2);
  CHECK(ds.class_count == 10);
  CHECK(ds.labels == std::vector<std::uint16_t>{3, 9});
  CHECK(ds.image(0).at(0, 0, 5) == 5);
  CHECK(ds.image(1).at(2, 31, 31) == static_cast<std::uint8_t>(255 - 3071 % 256));
  CHECK(load_cifar10_bin({dir / "batch.bin", dir / "batch.bin"}).size() == 4);

  write_bytes(dir / "short.bin", std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1));
  CHECK_THROWS_AS(load_cifar10_bin({dir / "short.bin"}), DataError);
  bytes[3073] = 10;
  write_bytes(dir / "label.bin", bytes);
  CHECK_THROWS_AS(load_cifar10_bin({dir / "label.bin"}), DataError);
  CHECK_THROWS_AS(load_cifar10_bin({dir / "missing.bin"}), DataError);
  fs::remove_all(dir);
}

TEST_CASE("load_cifar10_bin on a real batch when available") {
  const char* root = std::getenv("MICRORESNET_CIFAR_DIR");
  const fs::path file = root ? fs::path(root) / "data_batch_1.bin" : fs::path();
  if (!root || !fs::exists(file)) {
    MESSAGE("MICRORESNET_CIFAR_DIR/data_batch_1.bin not present; skipped");
    return;
  }
  CHECK(load_cifar10_bin({file}).size() == 10000);
}

TEST_CASE("raw dataset format") {
  const fs::path dir = temp_dir("raw");
  {
    std::ofstream(dir / "meta") << "2 3 64 64 200\n";
    write_bytes(dir / "images.u8", std::vector<std::uint8_t>(24576, 9));
    write_bytes(dir / "labels.u16", {199, 0, 4, 0});
    const Dataset ds = load_raw_dataset(dir);
    CHECK(ds.size() == 2);
    CHECK(ds.labels == std::vector<std::uint16_t>{199, 4});
    CHECK(ds.class_count == 200);
  }
  write_bytes(dir / "images.u8", std::vector<std::uint8_t>(24575, 9));
  CHECK_THROWS_AS(load_raw_dataset(dir), DataError);
  write_bytes(dir / "images.u8", std::vector<std::uint8_t>(24576, 9));
  write_bytes(dir / "labels.u16", {200, 0, 4, 0});
  CHECK_THROWS_AS(load_raw_dataset(dir), DataError);

  const Dataset synth = synth_dataset(12, 3, 8, 1);
  save_raw_dataset(synth, dir / "copy");
  const Dataset back = load_raw_dataset(dir / "copy");
  CHECK(back.pixels == synth.pixels);
  CHECK(back.labels == synth.labels);
  CHECK(back.class_count == synth.class_count);
  CHECK(image_shape(back) == Shape{3, 8, 8});
  fs::remove_all(dir);
}

TEST_CASE("batch iteration") {
  const Dataset ds = synth_dataset(10, 5, 8, 2);
  BatchOptions opts;
  opts.batch_size = 4;
  opts.shuffle = false;
  opts.normalization = Normalization::identity(3);
  BatchIterator it(ds, opts, 0);
  CHECK(it.batch_count() == 3);
  std::vector<std::size_t> sizes, seen;
  while (auto b = it.next()) {
    sizes.push_back(b->y.size());
    CHECK(b->x.shape() == Shape{b->y.size(), 3, 8, 8});
    seen.insert(seen.end(), b->indices.begin(), b->indices.end());
  }
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
  CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  opts.batch_size = 0;
  CHECK_THROWS_AS(BatchIterator(ds, opts, 0), ValueError);
  opts.batch_size = 4;
  CHECK_THROWS_AS(BatchIterator(Dataset{}, opts, 0), DataError);
}

TEST_CASE("batch iteration: shuffled epochs cover every sample once") {
  const Dataset ds = synth_dataset(37, 6, 8, 3);
  BatchOptions opts;
  opts.batch_size = 5;
  opts.seed = 11;
  opts.normalization = Normalization::identity(3);
  opts.augment = AugmentConfig::for_side(8);
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    BatchIterator it(ds, opts, epoch);
    std::vector<std::uint16_t> labels;
    std::vector<std::size_t> idx;
    while (auto b = it.next()) {
      for (int y : b->y) labels.push_back(static_cast<std::uint16_t>(y));
      idx.insert(idx.end(), b->indices.begin(), b->indices.end());
    }
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> expected(37);
    for (std::size_t i = 0; i < 37; ++i) expected[i] = i;
    CHECK(idx == expected);
    std::vector<std::uint16_t> all = ds.labels;
    std::sort(all.begin(), all.end());
    std::sort(labels.begin(), labels.end());
    CHECK(labels == all);
  }
  CHECK(BatchIterator(ds, opts, 0).order() != BatchIterator(ds, opts, 1).order());
}

TEST_CASE("batch iteration: identical seeds give identical streams") {
  const Dataset ds = synth_dataset(30, 3, 16, 4);
  BatchOptions opts;
  opts.batch_size = 7;
  opts.seed = 5;
  opts.normalization = compute_normalization(ds);
  opts.augment = AugmentConfig::for_side(16);
  const auto stream = [&](std::size_t workers) {
    BatchOptions o = opts;
    o.workers = workers;
    BatchIterator it(ds, o, 2);
    std::vector<std::vector<float>> out;
    while (auto b = it.next()) out.push_back(batch_values(*b));
    return out;
  };
  const auto a = stream(1);
  CHECK(a == stream(1));
  CHECK(a == stream(3));

  BatchOptions plain = opts;
  plain.augment.reset();
  BatchIterator it(ds, plain, 2);
  CHECK(batch_values(*it.next()) != a.front());
}

TEST_CASE("synth_dataset") {
  const Dataset a = synth_dataset(32, 8, 16, 9);
  std::vector<bool> covered(8, false);
  for (auto label : a.labels) covered[label] = true;
  CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
  CHECK_NOTHROW(a.validate());
  const Dataset b = synth_dataset(32, 8, 16, 9);
  CHECK(a.pixels == b.pixels);
  CHECK(synth_dataset(32, 8, 16, 10).pixels != a.pixels);
  CHECK_THROWS(synth_dataset(4, 8, 16, 1));
}
