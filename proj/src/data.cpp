#include "microresnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>

#include "microresnet/errors.hpp"
#include "microresnet/parallel.hpp"

namespace microresnet {

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarChannels = 3;
constexpr std::size_t kCifarClasses = 10;
constexpr std::size_t kCifarRecord = 1 + kCifarChannels * kCifarSide * kCifarSide;

constexpr std::uint64_t kPermutationTag = 0x7065726d75746531ULL;
constexpr std::uint64_t kAugmentTag = 0x6175676d656e7431ULL;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw DataError("short write to " + path.string());
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

// Source sample position and blend weight for one output coordinate.
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[d] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double sector = h * 6.0;
  const int i = static_cast<int>(std::floor(sector)) % 6;
  const double f = sector - std::floor(sector);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  const double table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
  for (int c = 0; c < 3; ++c) rgb[c] = table[i][c];
}

}  // namespace

std::span<const std::uint8_t> Dataset::image_span(std::size_t index) const {
  if (index >= size()) {
    throw DataError("sample index " + std::to_string(index) + " out of range for " + std::to_string(size()) +
                    " samples");
  }
  return std::span<const std::uint8_t>(pixels).subspan(index * image_bytes(), image_bytes());
}

ByteImage Dataset::image(std::size_t index) const {
  const auto span = image_span(index);
  ByteImage img;
  img.channels = channels;
  img.height = height;
  img.width = width;
  img.pixels.assign(span.begin(), span.end());
  return img;
}

void Dataset::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw DataError("dataset has a zero image extent");
  if (pixels.size() != labels.size() * image_bytes()) {
    throw DataError("dataset holds " + std::to_string(pixels.size()) + " pixel bytes for " +
                    std::to_string(labels.size()) + " images of " + std::to_string(image_bytes()) + " bytes");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_count) {
      throw DataError("sample " + std::to_string(i) + " has label " + std::to_string(labels[i]) + " but only " +
                      std::to_string(class_count) + " classes");
    }
  }
}

Dataset Dataset::head(std::size_t n) const {
  Dataset out = *this;
  if (n >= size()) return out;
  out.labels.resize(n);
  out.pixels.resize(n * image_bytes());
  return out;
}

void AugmentConfig::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ValueError("flip probability must lie in [0, 1]");
  if (!(crop_prob >= 0.0 && crop_prob <= 1.0)) throw ValueError("crop probability must lie in [0, 1]");
  if (crop_size == 0 || out_size == 0) throw ValueError("crop and output sizes must be positive");
}

AugmentConfig AugmentConfig::for_side(std::size_t side) {
  AugmentConfig cfg;
  cfg.out_size = side;
  cfg.crop_size = std::max<std::size_t>(1, (side * 7 + 4) / 8);
  return cfg;
}

ByteImage flip_horizontal(const ByteImage& img) {
  ByteImage out = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    }
  }
  return out;
}

ByteImage crop(const ByteImage& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  if (top + height > img.height || left + width > img.width) {
    throw ValueError("crop window exceeds the image bounds");
  }
  ByteImage out(img.channels, height, width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
    }
  }
  return out;
}

ByteImage rescale_bilinear(const ByteImage& img, std::size_t out_height, std::size_t out_width) {
  if (img.height == 0 || img.width == 0 || out_height == 0 || out_width == 0) {
    throw ValueError("rescale_bilinear: sizes must be positive");
  }
  const auto rows = bilinear_taps(img.height, out_height);
  const auto cols = bilinear_taps(img.width, out_width);
  ByteImage out(img.channels, out_height, out_width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < out_height; ++y) {
      const Tap& r = rows[y];
      for (std::size_t x = 0; x < out_width; ++x) {
        const Tap& q = cols[x];
        const double top = (1.0 - q.frac) * img.at(c, r.lo, q.lo) + q.frac * img.at(c, r.lo, q.hi);
        const double bottom = (1.0 - q.frac) * img.at(c, r.hi, q.lo) + q.frac * img.at(c, r.hi, q.hi);
        out.at(c, y, x) = to_byte((1.0 - r.frac) * top + r.frac * bottom);
      }
    }
  }
  return out;
}

ByteImage augment(const ByteImage& img, const AugmentConfig& cfg, Rng& rng, AugmentTrace* trace) {
  cfg.validate();
  if (img.height != img.width) {
    throw ValueError("augment: expected a square image, got " + std::to_string(img.height) + "x" +
                     std::to_string(img.width));
  }
  const std::size_t side = img.height;
  if (cfg.crop_size > side) {
    throw ValueError("augment: crop size " + std::to_string(cfg.crop_size) + " exceeds image side " +
                     std::to_string(side));
  }
  AugmentTrace local;
  local.flipped = rng.bernoulli(cfg.flip_prob);
  local.cropped = rng.bernoulli(cfg.crop_prob);
  ByteImage out = local.flipped ? flip_horizontal(img) : img;
  if (local.cropped) {
    const std::uint64_t positions = side - cfg.crop_size + 1;
    local.top = static_cast<std::size_t>(rng.uniform_index(positions));
    local.left = static_cast<std::size_t>(rng.uniform_index(positions));
    out = rescale_bilinear(crop(out, local.top, local.left, cfg.crop_size, cfg.crop_size), cfg.out_size,
                           cfg.out_size);
  } else if (side != cfg.out_size) {
    out = rescale_bilinear(out, cfg.out_size, cfg.out_size);
  }
  if (trace != nullptr) *trace = local;
  return out;
}

Normalization Normalization::identity(std::size_t channels) {
  return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

void Normalization::validate(std::size_t channels) const {
  if (mean.size() != channels || stddev.size() != channels) {
    throw ValueError("normalization has " + std::to_string(mean.size()) + "/" + std::to_string(stddev.size()) +
                     " mean/std entries for " + std::to_string(channels) + " channels");
  }
  for (float s : stddev) {
    if (!(s > 0.0f)) throw ValueError("normalization std must be positive");
  }
}

void normalize_into(std::span<const std::uint8_t> pixels, std::size_t channels, const Normalization& norm,
                    std::span<float> out) {
  norm.validate(channels);
  if (out.size() != pixels.size() || pixels.size() % channels != 0) {
    throw ShapeError("normalize: buffer sizes do not match");
  }
  const std::size_t plane = pixels.size() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    const float mean = norm.mean[c];
    const float inv_std = 1.0f / norm.stddev[c];
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      out[i] = (static_cast<float>(pixels[i]) / 255.0f - mean) * inv_std;
    }
  }
}

std::vector<float> normalize(const ByteImage& img, const Normalization& norm) {
  std::vector<float> out(img.pixels.size());
  normalize_into(img.pixels, img.channels, norm, out);
  return out;
}

Normalization compute_normalization(const Dataset& ds) {
  if (ds.size() == 0) throw DataError("cannot compute statistics of an empty dataset");
  Normalization norm;
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t c = 0; c < ds.channels; ++c) {
    double total = 0.0, total_sq = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t* p = ds.pixels.data() + i * ds.image_bytes() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = p[k] / 255.0;
        total += v;
        total_sq += v * v;
      }
    }
    const double count = static_cast<double>(ds.size() * plane);
    const double mean = total / count;
    const double var = std::max(0.0, total_sq / count - mean * mean);
    const double stddev = std::sqrt(var);
    norm.mean.push_back(static_cast<float>(mean));
    // A constant channel carries no information; leave its scale alone.
    norm.stddev.push_back(stddev > 1e-6 ? static_cast<float>(stddev) : 1.0f);
  }
  return norm;
}

Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw DataError("no CIFAR-10 batch files given");
  Dataset ds;
  ds.channels = kCifarChannels;
  ds.height = kCifarSide;
  ds.width = kCifarSide;
  ds.class_count = kCifarClasses;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % kCifarRecord != 0) {
      throw DataError(path.string() + ": length " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecord));
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      const std::uint8_t label = bytes[off];
      if (label >= kCifarClasses) {
        throw DataError(path.string() + ": record " + std::to_string(off / kCifarRecord) + " has label " +
                        std::to_string(label));
      }
      ds.labels.push_back(label);
      ds.pixels.insert(ds.pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off + 1),
                       bytes.begin() + static_cast<std::ptrdiff_t>(off + kCifarRecord));
    }
  }
  return ds;
}

Dataset load_raw_dataset(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "meta");
  if (!meta) throw DataError("cannot open " + (dir / "meta").string());
  std::string text((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream fields(text);
  std::size_t count = 0;
  Dataset ds;
  if (!(fields >> count >> ds.channels >> ds.height >> ds.width >> ds.class_count)) {
    throw DataError((dir / "meta").string() + ": expected 'count channels height width class_count'");
  }
  if (ds.class_count == 0 || ds.class_count > 65536) throw DataError("meta: class count out of range");
  ds.pixels = read_file(dir / "images.u8");
  if (ds.pixels.size() != count * ds.image_bytes()) {
    throw DataError((dir / "images.u8").string() + ": expected " + std::to_string(count * ds.image_bytes()) +
                    " bytes, found " + std::to_string(ds.pixels.size()));
  }
  const auto raw_labels = read_file(dir / "labels.u16");
  if (raw_labels.size() != count * 2) {
    throw DataError((dir / "labels.u16").string() + ": expected " + std::to_string(count * 2) + " bytes, found " +
                    std::to_string(raw_labels.size()));
  }
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = static_cast<std::uint16_t>(raw_labels[2 * i] | (raw_labels[2 * i + 1] << 8));
  }
  ds.validate();
  return ds;
}

void save_raw_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "meta", std::ios::trunc);
  if (!meta) throw DataError("cannot write " + (dir / "meta").string());
  meta << ds.size() << ' ' << ds.channels << ' ' << ds.height << ' ' << ds.width << ' ' << ds.class_count << '\n';
  write_file(dir / "images.u8", ds.pixels.data(), ds.pixels.size());
  std::vector<std::uint8_t> raw(ds.size() * 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    raw[2 * i] = static_cast<std::uint8_t>(ds.labels[i] & 0xFF);
    raw[2 * i + 1] = static_cast<std::uint8_t>(ds.labels[i] >> 8);
  }
  write_file(dir / "labels.u16", raw.data(), raw.size());
}

Dataset synth_dataset(std::size_t n, std::size_t classes, std::size_t side, std::uint64_t seed) {
  if (classes == 0 || n < classes) {
    throw ValueError("synth_dataset needs n >= classes >= 1, got n=" + std::to_string(n) +
                     " classes=" + std::to_string(classes));
  }
  if (side < 4) throw ValueError("synth_dataset needs a side of at least 4");
  Dataset ds;
  ds.channels = 3;
  ds.height = side;
  ds.width = side;
  ds.class_count = classes;
  ds.labels.resize(n);
  ds.pixels.resize(n * ds.image_bytes());
  constexpr std::size_t kGrid = 4;
  constexpr int kNoise = 24;
  const std::size_t square = side / kGrid;
  const long jitter = static_cast<long>(square / 2);
  Rng rng(seed);
  const auto clamp_pos = [&](long v) { return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(side - square))); };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    ds.labels[i] = static_cast<std::uint16_t>(label);
    // Class identity: hue band and square cell. Everything else varies per sample.
    const double hue = (static_cast<double>(label) + 0.9 * (rng.uniform() - 0.5)) / static_cast<double>(classes);
    double rgb[3];
    hsv_to_rgb(hue - std::floor(hue), 0.5 + 0.45 * rng.uniform(), 0.55 + 0.4 * rng.uniform(), rgb);
    const std::size_t cell = label % (kGrid * kGrid);
    const auto offset = [&] { return static_cast<long>(rng.uniform_index(2 * jitter + 1)) - jitter; };
    const std::size_t top = clamp_pos(static_cast<long>((cell / kGrid) * square) + offset());
    const std::size_t left = clamp_pos(static_cast<long>((cell % kGrid) * square) + offset());
    const bool distractor = rng.bernoulli(0.5);
    const std::size_t d_side = std::max<std::size_t>(1, square / 2);
    const std::size_t d_top = rng.uniform_index(side - d_side + 1), d_left = rng.uniform_index(side - d_side + 1);
    const int d_level = static_cast<int>(rng.uniform_index(256));
    std::uint8_t* img = ds.pixels.data() + i * ds.image_bytes();
    for (std::size_t c = 0; c < 3; ++c) {
      const int background = static_cast<int>(std::lround(rgb[c] * 255.0));
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const bool inside = y >= top && y < top + square && x >= left && x < left + square;
          int base = inside ? 255 - background : background;
          if (distractor && y >= d_top && y < d_top + d_side && x >= d_left && x < d_left + d_side) base = d_level;
          const int noise = static_cast<int>(rng.uniform_index(2 * kNoise + 1)) - kNoise;
          img[(c * side + y) * side + x] = static_cast<std::uint8_t>(std::clamp(base + noise, 0, 255));
        }
      }
    }
  }
  return ds;
}

BatchIterator::BatchIterator(const Dataset& ds, BatchOptions options, std::size_t epoch)
    : ds_(&ds), options_(std::move(options)), epoch_(epoch) {
  if (ds.size() == 0) throw DataError("cannot iterate over an empty dataset");
  if (options_.batch_size == 0) throw ValueError("batch size must be at least 1");
  if (options_.normalization.mean.empty()) options_.normalization = Normalization::identity(ds.channels);
  options_.normalization.validate(ds.channels);
  if (options_.augment) {
    options_.augment->validate();
    if (ds.height != ds.width) throw ValueError("augmentation needs square images");
    if (options_.augment->crop_size > ds.height) {
      throw ValueError("crop size " + std::to_string(options_.augment->crop_size) + " exceeds image side " +
                       std::to_string(ds.height));
    }
  }
  order_.resize(ds.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (options_.shuffle) {
    Rng rng = Rng::derive(options_.seed ^ kPermutationTag, epoch_);
    for (std::size_t i = order_.size(); i-- > 1;) {
      std::swap(order_[i], order_[static_cast<std::size_t>(rng.uniform_index(i + 1))]);
    }
  }
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + options_.batch_size - 1) / options_.batch_size;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(options_.batch_size, order_.size() - cursor_);
  const std::size_t side_h = options_.augment ? options_.augment->out_size : ds_->height;
  const std::size_t side_w = options_.augment ? options_.augment->out_size : ds_->width;
  const std::size_t per_image = ds_->channels * side_h * side_w;

  Batch batch;
  batch.x = Tensor<float>(Shape{count, ds_->channels, side_h, side_w});
  batch.y.resize(count);
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + count));
  float* dst = batch.x.data().data();
  parallel_for(
      count,
      [&](std::size_t k) {
        const std::size_t index = batch.indices[k];
        batch.y[k] = ds_->labels[index];
        std::span<float> out(dst + k * per_image, per_image);
        if (options_.augment) {
          Rng rng = Rng::derive(options_.seed ^ kAugmentTag, epoch_, index);
          const ByteImage img = augment(ds_->image(index), *options_.augment, rng);
          normalize_into(img.pixels, img.channels, options_.normalization, out);
        } else {
          normalize_into(ds_->image_span(index), ds_->channels, options_.normalization, out);
        }
      },
      options_.workers);
  cursor_ += count;
  return batch;
}

Shape image_shape(const Dataset& ds) { return Shape{ds.channels, ds.height, ds.width}; }

}  // namespace microresnet
