#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "microresnet/network.hpp"
#include "microresnet/rng.hpp"
#include "microresnet/tensor.hpp"

namespace microresnet {

/// One entry of an architecture column, e.g. "BB 128" or "Avg 2".
struct LayerSpec {
  enum class Kind { conv, bb, avg, max, dropout, fc };

  Kind kind = Kind::conv;
  std::size_t value = 0;  // channels, window or units; unused for dropout
  double rate = 0.5;      // dropout only

  static LayerSpec conv(std::size_t channels) { return {Kind::conv, channels, 0.5}; }
  static LayerSpec bb(std::size_t channels) { return {Kind::bb, channels, 0.5}; }
  static LayerSpec avg(std::size_t k) { return {Kind::avg, k, 0.5}; }
  static LayerSpec max(std::size_t k) { return {Kind::max, k, 0.5}; }
  static LayerSpec dropout(double rate = 0.5) { return {Kind::dropout, 0, rate}; }
  static LayerSpec fc(std::size_t units) { return {Kind::fc, units, 0.5}; }

  friend bool operator==(const LayerSpec& a, const LayerSpec& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::dropout ? a.rate == b.rate : a.value == b.value;
  }
};

std::string to_string(const LayerSpec& layer);

/// Expanded sequence of layer entries; exactly one FC, in last position.
struct ArchSpec {
  std::string name;
  std::vector<LayerSpec> layers;

  /// Entry-for-entry comparison; the name is not compared.
  friend bool operator==(const ArchSpec& a, const ArchSpec& b) { return a.layers == b.layers; }
};

/// Channels x height x width of one input image.
struct ImageShape {
  std::size_t channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

std::string to_string(const ImageShape& shape);
/// Parses "CxHxW".
ImageShape parse_image_shape(std::string_view text);

/// Parses architecture text. Entries are separated by newlines or ';',
/// "#" starts a comment, keywords are case-insensitive, and "(item) x n"
/// (or "×") repeats an item.
ArchSpec parse_arch(std::string_view text, std::string name = {});

/// Canonical text: one entry per line, runs of equal entries grouped as
/// "(item) x n". parse_arch(render_arch(s)) == s.
std::string render_arch(const ArchSpec& spec);

/// Parameterized layers: Conv 1, BB 2, FC 1; pooling and dropout 0.
std::size_t count_layers(const ArchSpec& spec);

/// Output shape after each entry: {C, H, W} for spatial entries, {units} for FC.
std::vector<Shape> infer_shapes(const ArchSpec& spec, ImageShape input);

/// Weight and bias elements of the network built from spec.
std::size_t count_params(const ArchSpec& spec, ImageShape input);

/// Instantiates and He-initializes the network. BB input channels follow the
/// running channel count; shortcuts are identity or zero-pad.
template <typename T>
Network<T> build_network(const ArchSpec& spec, ImageShape input, Rng& rng);

/// Replaces every "BB C" with "Conv C, Conv C"; everything else is unchanged.
ArchSpec to_plain_convnet(const ArchSpec& spec);

/// Built-in presets net1..net6.
std::vector<std::string> preset_names();
std::optional<std::string> preset_text(std::string_view name);
std::optional<ArchSpec> find_preset(std::string_view name);
/// Layer count published alongside a preset, when it differs from
/// count_layers() under the Conv/BB/FC rule.
std::optional<std::size_t> published_layer_count_mismatch(std::string_view name);
std::optional<std::size_t> published_layer_count(std::string_view name);

/// Preset name or path to an architecture text file.
ArchSpec load_arch(std::string_view preset_or_path);

extern template Network<float> build_network<float>(const ArchSpec&, ImageShape, Rng&);
extern template Network<double> build_network<double>(const ArchSpec&, ImageShape, Rng&);

}  // namespace microresnet
