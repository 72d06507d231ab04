#include "microresnet/network.hpp"

#include <sstream>

#include "microresnet/errors.hpp"

namespace microresnet {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::string format_rate(double rate) {
  std::ostringstream out;
  out << rate;
  return out.str();
}

}  // namespace

template <typename T>
std::string describe(const Layer<T>& layer) {
  return std::visit(Overloaded{
                        [](const ConvLayer<T>& l) { return "Conv " + std::to_string(l.out_channels()); },
                        [](const BasicBlock<T>& b) { return "BB " + std::to_string(b.out_channels()); },
                        [](const PoolLayer& p) {
                          return std::string(p.kind == PoolLayer::Kind::average ? "Avg " : "Max ") +
                                 std::to_string(p.window);
                        },
                        [](const DropoutLayer& d) { return "Dropout " + format_rate(d.rate); },
                        [](const LinearLayer<T>& l) { return "FC " + std::to_string(l.units()); },
                    },
                    layer);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, ForwardContext<T>& ctx) const {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      h = std::visit([&](const auto& layer) { return layer.forward(h, ctx); }, layers_[i]);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i + 1) + " (" + describe<T>(layers_[i]) + "): " + e.what());
    }
  }
  return h;
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& x) const {
  ForwardContext<T> ctx;
  return forward(x, ctx);
}

template <typename T>
std::vector<Tensor<T>*> Network<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](ConvLayer<T>& l) { out.insert(out.end(), {&l.weight, &l.bias}); },
                   [&](BasicBlock<T>& b) {
                     out.insert(out.end(), {&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias});
                   },
                   [&](LinearLayer<T>& l) { out.insert(out.end(), {&l.weight, &l.bias}); },
                   [](auto&) {},
               },
               layer);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Network<T>::parameters() const {
  auto mutable_params = const_cast<Network*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
std::vector<std::string> Network<T>::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = std::to_string(i);
    std::visit(Overloaded{
                   [&](const ConvLayer<T>&) {
                     names.push_back(prefix + ".conv.weight");
                     names.push_back(prefix + ".conv.bias");
                   },
                   [&](const BasicBlock<T>&) {
                     for (const char* part : {".conv1.weight", ".conv1.bias", ".conv2.weight", ".conv2.bias"}) {
                       names.push_back(prefix + part);
                     }
                   },
                   [&](const LinearLayer<T>&) {
                     names.push_back(prefix + ".fc.weight");
                     names.push_back(prefix + ".fc.bias");
                   },
                   [](const auto&) {},
               },
               layers_[i]);
  }
  return names;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto* p : parameters()) total += p->size();
  return total;
}

template <typename T>
std::size_t Network<T>::parameterized_layer_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const ConvLayer<T>&) { count += 1; },
                   [&](const BasicBlock<T>&) { count += 2; },
                   [&](const LinearLayer<T>&) { count += 1; },
                   [](const auto&) {},
               },
               layer);
  }
  return count;
}

template <typename T>
void Network<T>::init(Rng& rng) {
  for (auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](ConvLayer<T>& l) { init_params(l, rng); },
                   [&](BasicBlock<T>& b) { init_params(b, rng); },
                   [&](LinearLayer<T>& l) { init_params(l, rng); },
                   [](auto&) {},
               },
               layer);
  }
}

template class Network<float>;
template class Network<double>;
template std::string describe<float>(const Layer<float>&);
template std::string describe<double>(const Layer<double>&);

}  // namespace microresnet
