#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "microresnet/rng.hpp"
#include "microresnet/tensor.hpp"

namespace microresnet {

/// One channel-planar image of bytes (C x H x W).
struct ByteImage {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ByteImage() = default;
  ByteImage(std::size_t c, std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

  friend bool operator==(const ByteImage&, const ByteImage&) = default;
};

/// Labelled images of a uniform shape, stored contiguously.
struct Dataset {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t class_count = 0;
  std::vector<std::uint8_t> pixels;  // size() * channels * height * width
  std::vector<std::uint16_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_bytes() const noexcept { return channels * height * width; }
  std::span<const std::uint8_t> image_span(std::size_t index) const;
  ByteImage image(std::size_t index) const;

  /// Throws DataError when the invariants do not hold.
  void validate() const;
  /// First `n` samples (all when n >= size()).
  Dataset head(std::size_t n) const;
};

/// Online augmentation settings: horizontal flip with flip_prob, then with
/// crop_prob a random crop_size square crop rescaled to out_size.
struct AugmentConfig {
  double flip_prob = 0.5;
  double crop_prob = 0.7;
  std::size_t crop_size = 56;
  std::size_t out_size = 64;

  void validate() const;
  /// Same proportions as the 64 -> 56 default for a side x side source.
  static AugmentConfig for_side(std::size_t side);
};

/// What augment() did to one image.
struct AugmentTrace {
  bool flipped = false;
  bool cropped = false;
  std::size_t top = 0;
  std::size_t left = 0;
};

/// Flip, then maybe crop and rescale. Output is always out_size x out_size.
ByteImage augment(const ByteImage& img, const AugmentConfig& cfg, Rng& rng, AugmentTrace* trace = nullptr);

ByteImage flip_horizontal(const ByteImage& img);
ByteImage crop(const ByteImage& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

/// Bilinear resampling with half-pixel centers (align_corners = false),
/// rounded to the nearest byte.
ByteImage rescale_bilinear(const ByteImage& img, std::size_t out_height, std::size_t out_width);

/// Per-channel mean and standard deviation in the [0, 1] pixel domain.
struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;

  static Normalization identity(std::size_t channels);
  void validate(std::size_t channels) const;
};

/// (byte / 255 - mean) / std, per channel, written to `out`.
void normalize_into(std::span<const std::uint8_t> pixels, std::size_t channels, const Normalization& norm,
                    std::span<float> out);
std::vector<float> normalize(const ByteImage& img, const Normalization& norm);

Normalization compute_normalization(const Dataset& ds);

/// CIFAR-10 binary batches: 3073-byte records (label, 3x32x32 planar pixels).
Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& paths);

/// Directory with `meta` ("count channels height width class_count"),
/// `images.u8` and `labels.u16` (little-endian).
Dataset load_raw_dataset(const std::filesystem::path& dir);
void save_raw_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Class-coded synthetic images: a background hue band and a square whose grid
/// cell encode the class; saturation, brightness, square offset, an optional
/// distractor patch and pixel noise vary per sample. Labels are i % classes.
Dataset synth_dataset(std::size_t n, std::size_t classes, std::size_t side, std::uint64_t seed);

struct Batch {
  Tensor<float> x;  // [N, C, H, W], normalized
  std::vector<int> y;
  std::vector<std::size_t> indices;  // dataset indices of the samples
};

struct BatchOptions {
  std::size_t batch_size = 128;
  bool shuffle = true;
  std::optional<AugmentConfig> augment;
  std::uint64_t seed = 0;
  Normalization normalization;
  std::size_t workers = 1;
};

/// One epoch over a dataset. The permutation depends on (seed, epoch) and
/// each sample's augmentation on (seed, epoch, sample index), so the stream
/// is reproducible regardless of the worker count.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, BatchOptions options, std::size_t epoch);

  std::optional<Batch> next();
  std::size_t batch_count() const;
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  const Dataset* ds_;
  BatchOptions options_;
  std::size_t epoch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Input shape of a dataset as the tensor image shape {C, H, W}.
Shape image_shape(const Dataset& ds);

}  // namespace microresnet
