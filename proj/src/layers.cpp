#include "microresnet/layers.hpp"

#include <cmath>

#include "microresnet/errors.hpp"

namespace microresnet {

template <typename T>
Tensor<T> ForwardContext<T>::bind(const Tensor<T>& param) {
  if (tape == nullptr) return param;
  if (tape->owns(param)) {
    bound.push_back(*param.node());
    return param;
  }
  Tensor<T> tracked = tape->watch(param.detached());
  bound.push_back(*tracked.node());
  return tracked;
}

template <typename T>
Rng& ForwardContext<T>::dropout_rng() {
  if (rng == nullptr) throw ValueError("train-mode forward needs an Rng for dropout");
  return *rng;
}

template <typename T>
ConvLayer<T> ConvLayer<T>::create(std::size_t in_channels, std::size_t out_channels, bool relu) {
  if (in_channels == 0 || out_channels == 0) throw ValueError("conv layer needs positive channel counts");
  return ConvLayer{Tensor<T>(Shape{out_channels, in_channels, kKernel, kKernel}), Tensor<T>(Shape{out_channels}),
                   relu};
}

template <typename T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& x, ForwardContext<T>& ctx) const {
  if (x.rank() != 4 || x.dim(1) != in_channels()) {
    throw ShapeError("conv " + std::to_string(in_channels()) + "->" + std::to_string(out_channels()) +
                     ": input shape " + to_string(x.shape()) + " does not have " + std::to_string(in_channels()) +
                     " channels");
  }
  const Tensor<T> w = ctx.bind(weight);
  const Tensor<T> b = ctx.bind(bias);
  Tensor<T> out = conv2d(x, w, b, 1, 1, ctx.tape);
  return followed_by_relu ? relu(out, ctx.tape) : out;
}

ShortcutAdapter ShortcutAdapter::choose(std::size_t in_channels, std::size_t out_channels,
                                        std::size_t spatial_divisor) {
  if (spatial_divisor == 0) throw ValueError("shortcut: spatial divisor must be positive");
  if (out_channels < in_channels) {
    throw ShapeError("shortcut: cannot reduce " + std::to_string(in_channels) + " channels to " +
                     std::to_string(out_channels) + " without parameters");
  }
  if (spatial_divisor > 1) return {Kind::reduce_then_pad, out_channels, spatial_divisor};
  if (out_channels > in_channels) return {Kind::pad_channels, out_channels, 1};
  return {Kind::identity, out_channels, 1};
}

template <typename T>
Tensor<T> ShortcutAdapter::apply(const Tensor<T>& x, Tape<T>* tape) const {
  switch (kind) {
    case Kind::identity:
      return x;
    case Kind::pad_channels:
      return zero_pad_channels(x, channels, tape);
    case Kind::reduce_then_pad: {
      Tensor<T> reduced = avg_pool2d(x, reduce, tape);
      return channels == reduced.dim(1) ? reduced : zero_pad_channels(reduced, channels, tape);
    }
  }
  return x;
}

std::string ShortcutAdapter::describe() const {
  switch (kind) {
    case Kind::identity:
      return "identity";
    case Kind::pad_channels:
      return "pad_channels(" + std::to_string(channels) + ")";
    case Kind::reduce_then_pad:
      return "reduce_then_pad(" + std::to_string(reduce) + ", " + std::to_string(channels) + ")";
  }
  return "?";
}

template <typename T>
Tensor<T> shortcut_adapt(const Tensor<T>& x, std::size_t target_channels, std::size_t spatial_divisor,
                         Tape<T>* tape) {
  if (x.rank() != 4) throw ShapeError("shortcut: expected a 4-D input, got " + to_string(x.shape()));
  return ShortcutAdapter::choose(x.dim(1), target_channels, spatial_divisor).apply(x, tape);
}

template <typename T>
BasicBlock<T> BasicBlock<T>::create(std::size_t in_channels, std::size_t out_channels, double dropout_rate) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValueError("basic block dropout rate " + std::to_string(dropout_rate) + " is outside [0, 1)");
  }
  BasicBlock block;
  block.conv1 = ConvLayer<T>::create(in_channels, out_channels, true);
  block.conv2 = ConvLayer<T>::create(out_channels, out_channels, false);
  block.dropout_rate = dropout_rate;
  block.shortcut = ShortcutAdapter::choose(in_channels, out_channels, 1);
  return block;
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, ForwardContext<T>& ctx) const {
  if (x.rank() != 4 || x.dim(1) != in_channels()) {
    throw ShapeError("basic block " + std::to_string(in_channels()) + "->" + std::to_string(out_channels()) +
                     ": input shape " + to_string(x.shape()) + " does not have " + std::to_string(in_channels()) +
                     " channels");
  }
  Tensor<T> h = conv1.forward(x, ctx);
  if (ctx.mode == Mode::train && dropout_rate > 0.0) {
    h = dropout(h, dropout_rate, ctx.mode, ctx.dropout_rng(), ctx.tape);
  }
  h = conv2.forward(h, ctx);
  return relu(add(h, shortcut.apply(x, ctx.tape), ctx.tape), ctx.tape);
}

template <typename T>
LinearLayer<T> LinearLayer<T>::create(std::size_t in_features, std::size_t units) {
  if (in_features == 0 || units == 0) throw ValueError("linear layer needs positive sizes");
  return LinearLayer{Tensor<T>(Shape{units, in_features}), Tensor<T>(Shape{units})};
}

template <typename T>
Tensor<T> LinearLayer<T>::forward(const Tensor<T>& x, ForwardContext<T>& ctx) const {
  const Tensor<T> w = ctx.bind(weight);
  const Tensor<T> b = ctx.bind(bias);
  return linear(x, w, b, ctx.tape);
}

template <typename T>
Tensor<T> PoolLayer::forward(const Tensor<T>& x, ForwardContext<T>& ctx) const {
  return kind == Kind::average ? avg_pool2d(x, window, ctx.tape) : max_pool2d(x, window, ctx.tape);
}

template <typename T>
Tensor<T> DropoutLayer::forward(const Tensor<T>& x, ForwardContext<T>& ctx) const {
  if (ctx.mode == Mode::eval || rate == 0.0) return x;
  return dropout(x, rate, ctx.mode, ctx.dropout_rng(), ctx.tape);
}

namespace {

template <typename T>
void he_normal(Tensor<T>& weight, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : weight.data()) v = static_cast<T>(rng.normal() * stddev);
}

}  // namespace

template <typename T>
void init_params(ConvLayer<T>& layer, Rng& rng) {
  he_normal(layer.weight, layer.in_channels() * ConvLayer<T>::kKernel * ConvLayer<T>::kKernel, rng);
  layer.bias.fill(T(0));
}

template <typename T>
void init_params(BasicBlock<T>& block, Rng& rng) {
  init_params(block.conv1, rng);
  init_params(block.conv2, rng);
}

template <typename T>
void init_params(LinearLayer<T>& layer, Rng& rng) {
  he_normal(layer.weight, layer.in_features(), rng);
  layer.bias.fill(T(0));
}

template <typename T>
Tensor<T> conv_layer_forward(const ConvLayer<T>& layer, const Tensor<T>& x, Tape<T>* tape) {
  ForwardContext<T> ctx;
  ctx.tape = tape;
  return layer.forward(x, ctx);
}

template <typename T>
Tensor<T> basic_block_forward(const BasicBlock<T>& block, const Tensor<T>& x, Mode mode, Rng& rng, Tape<T>* tape) {
  ForwardContext<T> ctx;
  ctx.mode = mode;
  ctx.rng = &rng;
  ctx.tape = tape;
  return block.forward(x, ctx);
}

#define MICRORESNET_INSTANTIATE_LAYERS(T)                                                                    \
  template struct ForwardContext<T>;                                                                       \
  template struct ConvLayer<T>;                                                                            \
  template struct BasicBlock<T>;                                                                           \
  template struct LinearLayer<T>;                                                                          \
  template Tensor<T> ShortcutAdapter::apply(const Tensor<T>&, Tape<T>*) const;                             \
  template Tensor<T> shortcut_adapt(const Tensor<T>&, std::size_t, std::size_t, Tape<T>*);                 \
  template Tensor<T> PoolLayer::forward(const Tensor<T>&, ForwardContext<T>&) const;                       \
  template Tensor<T> DropoutLayer::forward(const Tensor<T>&, ForwardContext<T>&) const;                    \
  template void init_params(ConvLayer<T>&, Rng&);                                                          \
  template void init_params(BasicBlock<T>&, Rng&);                                                         \
  template void init_params(LinearLayer<T>&, Rng&);                                                        \
  template Tensor<T> conv_layer_forward(const ConvLayer<T>&, const Tensor<T>&, Tape<T>*);                  \
  template Tensor<T> basic_block_forward(const BasicBlock<T>&, const Tensor<T>&, Mode, Rng&, Tape<T>*);

MICRORESNET_INSTANTIATE_LAYERS(float)
MICRORESNET_INSTANTIATE_LAYERS(double)

}  // namespace microresnet
