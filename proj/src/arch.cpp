#include "microresnet/arch.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "microresnet/errors.hpp"

namespace microresnet {

namespace {

struct Preset {
  std::string_view name;
  std::string_view text;
  std::size_t published_layers;
};

constexpr std::array<Preset, 6> kPresets{{
    {"net1",
     "(Conv 64) x 2\nAvg 2\nBB 64\nBB 128\nAvg 2\nBB 128\nBB 256\nAvg 2\nBB 256\nAvg 2\nBB 512\nAvg 2\nFC 200\n", 15},
    {"net2", "Conv 64\nAvg 2\nBB 128\nAvg 2\nBB 128\nBB 256\nAvg 2\nBB 256\nAvg 2\nBB 512\nAvg 4\nFC 200\n", 12},
    {"net3",
     "Conv 32\nConv 64\nMax 2\n(BB 64) x 2\nAvg 2\n(BB 128) x 3\nAvg 2\nBB 128\nAvg 2\nBB 256\nAvg 2\nFC 200\n", 17},
    {"net4",
     "(Conv 64) x 2\nAvg 2\n(BB 64) x 3\nMax 2\n(BB 128) x 3\nMax 2\nBB 256\nBB512\nAvg 2\nDropout\nFC 200\n", 21},
    {"net5", "(Conv 64) x 2\nAvg 2\nBB 128\nMax 2\n(BB 256) x 2\nMax 2\n(BB 512) x 2\nAvg 2\nDropout\nFC 200\n", 15},
    {"net6",
     "(Conv 64) x 2\nAvg 2\n(Conv 64) x 2\n(Conv 128) x 2\nAvg 2\n(Conv 128) x 2\n(Conv 256) x 2\nAvg 2\n"
     "(Conv 256) x 2\nAvg 2\n(Conv 512) x 2\nAvg2\nFC 200\n",
     15},
}};

const Preset* lookup(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string replace_times_sign(std::string_view s) {
  static constexpr std::string_view kTimes = "\xC3\x97";  // U+00D7
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s.substr(i, kTimes.size()) == kTimes) {
      out += 'x';
      i += kTimes.size();
    } else {
      out += s[i++];
    }
  }
  return out;
}

std::size_t parse_positive(std::string_view digits, std::size_t line, std::string_view what) {
  digits = trim(digits);
  if (digits.empty()) throw ParseError(line, "missing " + std::string(what));
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw ParseError(line, "expected an integer " + std::string(what) + ", got '" + std::string(digits) + "'");
  }
  if (value == 0) throw ParseError(line, std::string(what) + " must be positive");
  return value;
}

LayerSpec parse_item(std::string_view item, std::size_t line) {
  item = trim(item);
  std::size_t split = 0;
  while (split < item.size() && std::isalpha(static_cast<unsigned char>(item[split]))) ++split;
  const std::string keyword = lower(item.substr(0, split));
  const std::string_view rest = trim(item.substr(split));
  if (keyword == "conv") return LayerSpec::conv(parse_positive(rest, line, "channel count"));
  if (keyword == "bb") return LayerSpec::bb(parse_positive(rest, line, "channel count"));
  if (keyword == "avg") return LayerSpec::avg(parse_positive(rest, line, "pooling window"));
  if (keyword == "max") return LayerSpec::max(parse_positive(rest, line, "pooling window"));
  if (keyword == "fc") return LayerSpec::fc(parse_positive(rest, line, "unit count"));
  if (keyword == "dropout") {
    if (rest.empty()) return LayerSpec::dropout();
    double rate = 0.0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), rate);
    if (ec != std::errc() || ptr != rest.data() + rest.size()) {
      throw ParseError(line, "expected a dropout rate, got '" + std::string(rest) + "'");
    }
    if (!(rate >= 0.0 && rate < 1.0)) throw ParseError(line, "dropout rate must lie in [0, 1)");
    return LayerSpec::dropout(rate);
  }
  if (keyword.empty()) throw ParseError(line, "expected a layer keyword, got '" + std::string(item) + "'");
  throw ParseError(line, "unknown layer keyword '" + std::string(item.substr(0, split)) +
                             "' (expected Conv, BB, Avg, Max, Dropout or FC)");
}

void parse_entry(std::string_view entry, std::size_t line, std::vector<LayerSpec>& out,
                 std::vector<std::size_t>& lines) {
  entry = trim(entry);
  if (entry.empty()) return;
  if (entry.front() != '(') {
    out.push_back(parse_item(entry, line));
    lines.push_back(line);
    return;
  }
  const auto close = entry.find(')');
  if (close == std::string_view::npos) throw ParseError(line, "missing ')'");
  const LayerSpec item = parse_item(entry.substr(1, close - 1), line);
  std::string_view rest = trim(entry.substr(close + 1));
  if (rest.empty() || (rest.front() != 'x' && rest.front() != 'X')) {
    throw ParseError(line, "missing repeat count after ')' (expected 'x n')");
  }
  const std::size_t count = parse_positive(rest.substr(1), line, "repeat count");
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(item);
    lines.push_back(line);
  }
}

std::string format_rate(double rate) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), rate);
  return std::string(buf.data(), ptr);
}

std::string entry_label(std::size_t index, const LayerSpec& layer) {
  return "entry " + std::to_string(index + 1) + " (" + to_string(layer) + ")";
}

}  // namespace

std::string to_string(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerSpec::Kind::conv:
      return "Conv " + std::to_string(layer.value);
    case LayerSpec::Kind::bb:
      return "BB " + std::to_string(layer.value);
    case LayerSpec::Kind::avg:
      return "Avg " + std::to_string(layer.value);
    case LayerSpec::Kind::max:
      return "Max " + std::to_string(layer.value);
    case LayerSpec::Kind::dropout:
      return "Dropout " + format_rate(layer.rate);
    case LayerSpec::Kind::fc:
      return "FC " + std::to_string(layer.value);
  }
  return "?";
}

std::string to_string(const ImageShape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" + std::to_string(shape.width);
}

ImageShape parse_image_shape(std::string_view text) {
  std::array<std::size_t, 3> dims{};
  std::size_t index = 0;
  std::size_t start = 0;
  const std::string normalized = lower(replace_times_sign(text));
  const std::string_view s = normalized;
  while (index < 3) {
    const auto end = s.find('x', start);
    const auto piece = trim(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (piece.empty() || ec != std::errc() || ptr != piece.data() + piece.size() || value == 0) {
      throw ValueError("image shape must look like CxHxW with positive integers, got '" + std::string(text) + "'");
    }
    dims[index++] = value;
    if (end == std::string_view::npos) break;
    start = end + 1;
    if (index == 3) throw ValueError("image shape has more than three dimensions: '" + std::string(text) + "'");
  }
  if (index != 3) throw ValueError("image shape must look like CxHxW, got '" + std::string(text) + "'");
  return {dims[0], dims[1], dims[2]};
}

ArchSpec parse_arch(std::string_view text, std::string name) {
  ArchSpec spec;
  spec.name = std::move(name);
  std::vector<std::size_t> lines;
  const std::string normalized = replace_times_sign(text);
  std::istringstream in(normalized);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto semi = line.find(';', start);
      const auto end = semi == std::string_view::npos ? line.size() : semi;
      parse_entry(line.substr(start, end - start), line_no, spec.layers, lines);
      start = end + 1;
    }
  }
  if (spec.layers.empty()) throw ParseError(std::max<std::size_t>(line_no, 1), "architecture has no entries");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerSpec::Kind::fc && i + 1 != spec.layers.size()) {
      throw ParseError(lines[i], "FC must be the last entry");
    }
  }
  if (spec.layers.back().kind != LayerSpec::Kind::fc) {
    throw ParseError(lines.back(), "architecture must end with an FC entry");
  }
  return spec;
}

std::string render_arch(const ArchSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.layers.size();) {
    std::size_t run = 1;
    while (i + run < spec.layers.size() && spec.layers[i + run] == spec.layers[i]) ++run;
    if (run > 1) {
      out += "(" + to_string(spec.layers[i]) + ") x " + std::to_string(run) + "\n";
    } else {
      out += to_string(spec.layers[i]) + "\n";
    }
    i += run;
  }
  return out;
}

std::size_t count_layers(const ArchSpec& spec) {
  std::size_t count = 0;
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerSpec::Kind::conv:
      case LayerSpec::Kind::fc:
        count += 1;
        break;
      case LayerSpec::Kind::bb:
        count += 2;
        break;
      default:
        break;
    }
  }
  return count;
}

std::vector<Shape> infer_shapes(const ArchSpec& spec, ImageShape input) {
  if (input.channels == 0 || input.height == 0 || input.width == 0) {
    throw ShapeError("input shape " + to_string(input) + " has a zero extent");
  }
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  std::size_t c = input.channels, h = input.height, w = input.width;
  bool flat = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (flat) throw ShapeError(entry_label(i, layer) + ": follows an FC entry");
    switch (layer.kind) {
      case LayerSpec::Kind::conv:
      case LayerSpec::Kind::bb:
        c = layer.value;
        break;
      case LayerSpec::Kind::avg:
      case LayerSpec::Kind::max:
        if (h % layer.value != 0 || w % layer.value != 0 || h / layer.value == 0 || w / layer.value == 0) {
          throw ShapeError(entry_label(i, layer) + ": spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                           " is not divisible by " + std::to_string(layer.value));
        }
        h /= layer.value;
        w /= layer.value;
        break;
      case LayerSpec::Kind::dropout:
        break;
      case LayerSpec::Kind::fc:
        flat = true;
        shapes.push_back(Shape{layer.value});
        continue;
    }
    shapes.push_back(Shape{c, h, w});
  }
  return shapes;
}

std::size_t count_params(const ArchSpec& spec, ImageShape input) {
  const auto shapes = infer_shapes(spec, input);
  std::size_t total = 0;
  Shape previous{input.channels, input.height, input.width};
  constexpr std::size_t kTaps = 9;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const std::size_t in_channels = previous[0];
    switch (layer.kind) {
      case LayerSpec::Kind::conv:
        total += layer.value * in_channels * kTaps + layer.value;
        break;
      case LayerSpec::Kind::bb:
        total += layer.value * in_channels * kTaps + layer.value;
        total += layer.value * layer.value * kTaps + layer.value;
        break;
      case LayerSpec::Kind::fc:
        total += layer.value * element_count(previous) + layer.value;
        break;
      default:
        break;
    }
    previous = shapes[i];
  }
  return total;
}

template <typename T>
Network<T> build_network(const ArchSpec& spec, ImageShape input, Rng& rng) {
  const auto shapes = infer_shapes(spec, input);
  Network<T> net;
  Shape previous{input.channels, input.height, input.width};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    switch (layer.kind) {
      case LayerSpec::Kind::conv:
        net.append(ConvLayer<T>::create(previous[0], layer.value, true));
        break;
      case LayerSpec::Kind::bb:
        net.append(BasicBlock<T>::create(previous[0], layer.value));
        break;
      case LayerSpec::Kind::avg:
        net.append(PoolLayer{PoolLayer::Kind::average, layer.value});
        break;
      case LayerSpec::Kind::max:
        net.append(PoolLayer{PoolLayer::Kind::max, layer.value});
        break;
      case LayerSpec::Kind::dropout:
        net.append(DropoutLayer{layer.rate});
        break;
      case LayerSpec::Kind::fc:
        net.append(LinearLayer<T>::create(element_count(previous), layer.value));
        break;
    }
    previous = shapes[i];
  }
  net.init(rng);
  return net;
}

ArchSpec to_plain_convnet(const ArchSpec& spec) {
  ArchSpec plain;
  plain.name = spec.name.empty() ? std::string() : spec.name + "-plain";
  for (const auto& layer : spec.layers) {
    if (layer.kind == LayerSpec::Kind::bb) {
      plain.layers.push_back(LayerSpec::conv(layer.value));
      plain.layers.push_back(LayerSpec::conv(layer.value));
    } else {
      plain.layers.push_back(layer);
    }
  }
  return plain;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  return names;
}

std::optional<std::string> preset_text(std::string_view name) {
  const Preset* p = lookup(name);
  if (p == nullptr) return std::nullopt;
  return std::string(p->text);
}

std::optional<ArchSpec> find_preset(std::string_view name) {
  const Preset* p = lookup(name);
  if (p == nullptr) return std::nullopt;
  return parse_arch(p->text, std::string(p->name));
}

std::optional<std::size_t> published_layer_count(std::string_view name) {
  const Preset* p = lookup(name);
  if (p == nullptr) return std::nullopt;
  return p->published_layers;
}

std::optional<std::size_t> published_layer_count_mismatch(std::string_view name) {
  const Preset* p = lookup(name);
  if (p == nullptr) return std::nullopt;
  if (count_layers(parse_arch(p->text)) == p->published_layers) return std::nullopt;
  return p->published_layers;
}

ArchSpec load_arch(std::string_view preset_or_path) {
  if (auto preset = find_preset(preset_or_path)) return *preset;
  const std::filesystem::path path{std::string(preset_or_path)};
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ValueError("unknown architecture '" + std::string(preset_or_path) + "': not a preset (" + names +
                     ") and no such file");
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_arch(text.str(), path.stem().string());
}

template Network<float> build_network<float>(const ArchSpec&, ImageShape, Rng&);
template Network<double> build_network<double>(const ArchSpec&, ImageShape, Rng&);

}  // namespace microresnet
