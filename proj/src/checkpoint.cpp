#include "microresnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "microresnet/errors.hpp"

namespace microresnet {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'N', 'C'};
constexpr std::size_t kMaxRank = 8;
constexpr std::string_view kInputDirective = "# input:";
constexpr std::string_view kNameDirective = "# name:";

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const NamedTensor& t) {
    text(t.name);
    u8(static_cast<std::uint8_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) u64(d);
    for (float v : t.tensor.data()) u32(std::bit_cast<std::uint32_t>(v));
  }
  void tensors(const std::vector<NamedTensor>& ts) {
    u32(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) tensor(t);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

  void need(std::size_t n, std::string_view what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(pos_, "truncated checkpoint: need " + std::to_string(n) + " bytes for " + std::string(what) +
                                  ", " + std::to_string(in_.size() - pos_) + " left");
    }
  }
  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(std::string_view what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string text(std::string_view what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = text("tensor name");
    const std::size_t rank_offset = pos_;
    const std::uint8_t rank = u8("tensor rank");
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError(rank_offset, "tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    }
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      const std::size_t dim_offset = pos_;
      d = u64("tensor dimension");
      if (d == 0 || d > (std::size_t{1} << 40) || count > (std::size_t{1} << 40) / d) {
        throw FormatError(dim_offset, "tensor '" + t.name + "' has an invalid dimension");
      }
      count *= d;
    }
    need(count * 4, "tensor payload of '" + t.name + "'");
    std::vector<float> data(count);
    for (auto& v : data) v = std::bit_cast<float>(u32("tensor payload"));
    t.tensor = Tensor<float>(std::move(shape), std::move(data));
    return t;
  }
  std::vector<NamedTensor> tensors(std::string_view what) {
    const std::uint32_t n = u32(what);
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::string directive(const std::string& text, std::string_view key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key, 0) == 0) {
      std::string value = line.substr(key.size());
      const auto first = value.find_first_not_of(' ');
      return first == std::string::npos ? std::string() : value.substr(first);
    }
  }
  return {};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(ckpt.version);
  w.text(ckpt.arch_text);
  w.tensors(ckpt.tensors);
  w.tensors(ckpt.optimizer);
  w.u64(ckpt.epoch);
  w.text(ckpt.rng_state);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic, "magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(0, "bad magic: not a checkpoint file");
  }
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8("magic");
  Checkpoint ckpt;
  const std::size_t version_offset = r.offset();
  ckpt.version = r.u32("version");
  if (ckpt.version != Checkpoint::kVersion) {
    throw FormatError(version_offset, "unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.arch_text = r.text("architecture text");
  ckpt.tensors = r.tensors("tensor count");
  ckpt.optimizer = r.tensors("optimizer count");
  ckpt.epoch = r.u64("epoch");
  ckpt.rng_state = r.text("rng state");
  if (!r.done()) throw FormatError(r.offset(), "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const TrainingState& state) {
  Checkpoint ckpt;
  ckpt.arch_text = std::string(kNameDirective) + " " + state.arch.name + "\n" + std::string(kInputDirective) + " " +
                   to_string(state.input) + "\n" + render_arch(state.arch);
  const auto names = state.network.parameter_names();
  const auto params = state.network.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) ckpt.tensors.push_back({names[i], *params[i]});
  const std::size_t channels = state.normalization.mean.size();
  ckpt.tensors.push_back({"norm.mean", Tensor<float>(Shape{channels}, state.normalization.mean)});
  ckpt.tensors.push_back({"norm.std", Tensor<float>(Shape{channels}, state.normalization.stddev)});
  for (std::size_t i = 0; i < state.optimizer.velocity.size(); ++i) {
    ckpt.optimizer.push_back({"momentum." + names.at(i), state.optimizer.velocity[i]});
  }
  ckpt.epoch = state.epoch;
  ckpt.rng_state = state.rng.state();
  return ckpt;
}

TrainingState restore_training(const Checkpoint& ckpt) {
  const std::string input_text = directive(ckpt.arch_text, kInputDirective);
  if (input_text.empty()) throw ShapeError("checkpoint architecture text lacks an input shape");
  TrainingState state;
  state.arch = parse_arch(ckpt.arch_text, directive(ckpt.arch_text, kNameDirective));
  state.input = parse_image_shape(input_text);
  Rng unused;
  state.network = build_network<float>(state.arch, state.input, unused);

  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t.tensor;
  const auto take = [&](const std::string& name, const Shape& shape) -> const Tensor<float>& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != shape) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + to_string(it->second->shape()) +
                       ", architecture expects " + to_string(shape));
    }
    return *it->second;
  };
  const auto names = state.network.parameter_names();
  auto params = state.network.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = take(names[i], params[i]->shape()).detached();
  const Shape norm_shape{state.input.channels};
  const auto& mean = take("norm.mean", norm_shape);
  const auto& stddev = take("norm.std", norm_shape);
  state.normalization.mean.assign(mean.data().begin(), mean.data().end());
  state.normalization.stddev.assign(stddev.data().begin(), stddev.data().end());
  if (params.size() + 2 != ckpt.tensors.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, architecture expects " +
                     std::to_string(params.size() + 2));
  }

  if (!ckpt.optimizer.empty()) {
    if (ckpt.optimizer.size() != params.size()) {
      throw ShapeError("checkpoint holds " + std::to_string(ckpt.optimizer.size()) + " momentum buffers for " +
                       std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& buf = ckpt.optimizer[i];
      if (buf.name != "momentum." + names[i] || buf.tensor.shape() != params[i]->shape()) {
        throw ShapeError("momentum buffer '" + buf.name + "' does not match parameter '" + names[i] + "'");
      }
      state.optimizer.velocity.push_back(buf.tensor);
    }
  } else {
    for (const auto* p : params) state.optimizer.velocity.emplace_back(p->shape());
  }
  state.epoch = static_cast<std::size_t>(ckpt.epoch);
  state.rng.restore(ckpt.rng_state);
  return state;
}

}  // namespace microresnet
