#include "microresnet/tape.hpp"

#include <atomic>

#include "microresnet/errors.hpp"

namespace microresnet {

namespace {

std::atomic<std::uint64_t> g_next_serial{1};

template <typename T>
void accumulate(std::optional<Tensor<T>>& slot, Tensor<T>&& grad, const Shape& expected, const std::string& op) {
  if (grad.shape() != expected) {
    throw TapeError("backward of " + op + " produced gradient " + to_string(grad.shape()) + " for input " +
                    to_string(expected));
  }
  if (!slot) {
    slot.emplace(std::move(grad));
    return;
  }
  auto dst = slot->data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
const Tensor<T>* Gradients<T>::find(NodeId id) const {
  if (id.tape != tape_ || id.index >= grads_.size() || !grads_[id.index]) return nullptr;
  return &*grads_[id.index];
}

template <typename T>
const Tensor<T>* Gradients<T>::find(const Tensor<T>& t) const {
  return t.node() ? find(*t.node()) : nullptr;
}

template <typename T>
Tensor<T> Gradients<T>::of(NodeId id) const {
  if (id.tape != tape_ || id.index >= shapes_.size()) {
    throw TapeError("tensor is not tracked by the tape these gradients came from");
  }
  if (const auto* g = find(id)) return *g;
  return Tensor<T>(shapes_[id.index]);
}

template <typename T>
Tensor<T> Gradients<T>::of(const Tensor<T>& t) const {
  if (!t.node()) throw TapeError("gradient requested for an untracked tensor");
  return of(*t.node());
}

template <typename T>
Tape<T>::Tape() : serial_(g_next_serial.fetch_add(1)) {}

template <typename T>
bool Tape<T>::owns(const Tensor<T>& t) const {
  return t.node() && t.node()->tape == serial_ && t.node()->index < nodes_.size();
}

template <typename T>
Tensor<T> Tape<T>::watch(Tensor<T> value) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  value.set_node(NodeId{serial_, nodes_.size()});
  nodes_.push_back(Node{"leaf", {}, value.shape(), nullptr});
  return value;
}

template <typename T>
Tensor<T> Tape<T>::record(std::string_view op, Tensor<T> output, const std::vector<const Tensor<T>*>& inputs,
                          BackwardFn backward) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  std::vector<std::optional<std::size_t>> ids;
  ids.reserve(inputs.size());
  bool any = false;
  for (const auto* in : inputs) {
    if (in != nullptr && in->node()) {
      if (!owns(*in)) throw TapeError(std::string(op) + ": input is tracked by a different tape");
      ids.emplace_back(in->node()->index);
      any = true;
    } else {
      ids.emplace_back(std::nullopt);
    }
  }
  if (!any) return output.detached();
  output.set_node(NodeId{serial_, nodes_.size()});
  nodes_.push_back(Node{std::string(op), std::move(ids), output.shape(), std::move(backward)});
  return output;
}

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape");
  if (!owns(loss)) throw TapeError("loss is not recorded on this tape");
  if (loss.size() != 1) throw TapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  consumed_ = true;

  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.shape);

  const std::size_t root = loss.node()->index;
  grads[root].emplace(loss.shape(), T(1));
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!grads[i] || !node.backward) continue;
    std::vector<bool> needs(node.inputs.size());
    for (std::size_t j = 0; j < needs.size(); ++j) needs[j] = node.inputs[j].has_value();
    auto input_grads = node.backward(*grads[i], needs);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      if (!node.inputs[j]) continue;
      const std::size_t src = *node.inputs[j];
      accumulate(grads[src], std::move(input_grads.at(j)), nodes_[src].shape, node.op);
    }
    // Saved activations are no longer needed.
    node.backward = nullptr;
  }
  return Gradients<T>(serial_, std::move(grads), std::move(shapes));
}

template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace microresnet
