#pragma once

#include <string>
#include <variant>
#include <vector>

#include "microresnet/layers.hpp"

namespace microresnet {

template <typename T>
using Layer = std::variant<ConvLayer<T>, BasicBlock<T>, PoolLayer, DropoutLayer, LinearLayer<T>>;

/// Sequential stack of layers.
template <typename T>
class Network {
 public:
  Network() = default;

  void append(Layer<T> layer) { layers_.push_back(std::move(layer)); }

  const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
  std::vector<Layer<T>>& layers() noexcept { return layers_; }
  bool empty() const noexcept { return layers_.empty(); }

  Tensor<T> forward(const Tensor<T>& x, ForwardContext<T>& ctx) const;

  /// Convenience forward: eval mode, no tape.
  Tensor<T> predict(const Tensor<T>& x) const;

  /// Layer order, weight before bias.
  std::vector<Tensor<T>*> parameters();
  std::vector<const Tensor<T>*> parameters() const;
  /// Names matching parameters(), e.g. "3.conv1.weight".
  std::vector<std::string> parameter_names() const;

  std::size_t parameter_count() const;
  /// Conv counts 1, BasicBlock 2, Linear 1.
  std::size_t parameterized_layer_count() const;

  void init(Rng& rng);

 private:
  std::vector<Layer<T>> layers_;
};

template <typename T>
std::vector<Tensor<T>*> collect_parameters(Network<T>& network) {
  return network.parameters();
}

/// Short description of one layer, e.g. "BB 128".
template <typename T>
std::string describe(const Layer<T>& layer);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace microresnet
