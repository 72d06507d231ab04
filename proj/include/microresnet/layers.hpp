#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "microresnet/ops.hpp"
#include "microresnet/rng.hpp"
#include "microresnet/tape.hpp"
#include "microresnet/tensor.hpp"

namespace microresnet {

/// Per-forward settings shared by every layer of a network.
template <typename T>
struct ForwardContext {
  Mode mode = Mode::eval;
  Rng* rng = nullptr;
  Tape<T>* tape = nullptr;
  /// Tape nodes of the parameters used, in collect_parameters order.
  std::vector<NodeId> bound;

  /// Parameter as seen by the ops: a tracked copy when recording, or the
  /// parameter itself when it is already tracked on `tape`.
  Tensor<T> bind(const Tensor<T>& param);
  Rng& dropout_rng();
};

/// 3x3 convolution, stride 1, pad 1, optionally followed by ReLU.
template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [Cout, Cin, 3, 3]
  Tensor<T> bias;    // [Cout]
  bool followed_by_relu = true;

  static constexpr std::size_t kKernel = 3;

  /// Zero-initialized layer.
  static ConvLayer create(std::size_t in_channels, std::size_t out_channels, bool relu = true);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  Tensor<T> forward(const Tensor<T>& x, ForwardContext<T>& ctx) const;
};

/// Parameter-free path from a block input to its addition node.
struct ShortcutAdapter {
  enum class Kind { identity, pad_channels, reduce_then_pad };

  Kind kind = Kind::identity;
  std::size_t channels = 0;  // target channel count (pad modes)
  std::size_t reduce = 1;    // average-pool window (reduce_then_pad)

  /// Adapter mapping in_channels to out_channels with spatial reduction by
  /// `spatial_divisor`.
  static ShortcutAdapter choose(std::size_t in_channels, std::size_t out_channels, std::size_t spatial_divisor = 1);

  static constexpr std::size_t parameter_count() { return 0; }

  template <typename T>
  Tensor<T> apply(const Tensor<T>& x, Tape<T>* tape = nullptr) const;

  std::string describe() const;
};

/// Identity when shapes already match; average-pool when spatial_divisor > 1;
/// zero-pad when channels grow.
template <typename T>
Tensor<T> shortcut_adapt(const Tensor<T>& x, std::size_t target_channels, std::size_t spatial_divisor,
                         Tape<T>* tape = nullptr);

/// Residual block: conv1 -> ReLU -> dropout -> conv2 -> + shortcut(x) -> ReLU.
/// Only the un-parameterized ReLU follows the addition.
template <typename T>
struct BasicBlock {
  ConvLayer<T> conv1;
  ConvLayer<T> conv2;
  double dropout_rate = 0.5;
  ShortcutAdapter shortcut;

  static BasicBlock create(std::size_t in_channels, std::size_t out_channels, double dropout_rate = 0.5);

  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_channels() const { return conv2.out_channels(); }
  std::size_t parameter_count() const { return conv1.parameter_count() + conv2.parameter_count(); }

  Tensor<T> forward(const Tensor<T>& x, ForwardContext<T>& ctx) const;
};

/// Fully connected layer over flattened input.
template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [K, D]
  Tensor<T> bias;    // [K]

  static LinearLayer create(std::size_t in_features, std::size_t units);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t units() const { return weight.dim(0); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  Tensor<T> forward(const Tensor<T>& x, ForwardContext<T>& ctx) const;
};

struct PoolLayer {
  enum class Kind { average, max };
  Kind kind = Kind::average;
  std::size_t window = 2;

  template <typename T>
  Tensor<T> forward(const Tensor<T>& x, ForwardContext<T>& ctx) const;
};

struct DropoutLayer {
  double rate = 0.5;

  template <typename T>
  Tensor<T> forward(const Tensor<T>& x, ForwardContext<T>& ctx) const;
};

// He initialization: weights ~ N(0, sqrt(2 / fan_in)), biases zero.
template <typename T>
void init_params(ConvLayer<T>& layer, Rng& rng);
template <typename T>
void init_params(BasicBlock<T>& block, Rng& rng);
template <typename T>
void init_params(LinearLayer<T>& layer, Rng& rng);

template <typename T>
Tensor<T> conv_layer_forward(const ConvLayer<T>& layer, const Tensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> basic_block_forward(const BasicBlock<T>& block, const Tensor<T>& x, Mode mode, Rng& rng,
                              Tape<T>* tape = nullptr);

}  // namespace microresnet
