#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "microresnet/tensor.hpp"

namespace microresnet {

/// Gradients produced by one backward sweep, indexed by tape node.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::uint64_t tape, std::vector<std::optional<Tensor<T>>> grads, std::vector<Shape> shapes)
      : tape_(tape), grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  /// Gradient of a tracked tensor, or nullptr when it was not reached.
  const Tensor<T>* find(const Tensor<T>& t) const;
  const Tensor<T>* find(NodeId id) const;

  /// Gradient of a tracked tensor; zeros when unreachable from the loss.
  Tensor<T> of(const Tensor<T>& t) const;
  Tensor<T> of(NodeId id) const;

  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::uint64_t tape_ = 0;
  std::vector<std::optional<Tensor<T>>> grads_;
  std::vector<Shape> shapes_;
};

/// Append-only record of differentiable ops for reverse-mode backpropagation.
///
/// Node indices grow in execution order, so walking them backwards is a
/// valid reverse topological order. A tape supports exactly one backward().
template <typename T>
class Tape {
 public:
  /// Produces the input gradients of one node. `needs[i]` tells whether input
  /// i is tracked; untracked slots may be left empty.
  using BackwardFn =
      std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_out, const std::vector<bool>& needs)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// Registers a leaf and returns a tracked copy of it.
  Tensor<T> watch(Tensor<T> value);

  /// Records `output` as produced by `op` from `inputs`. Returns output
  /// untracked when no input is tracked on this tape.
  Tensor<T> record(std::string_view op, Tensor<T> output, const std::vector<const Tensor<T>*>& inputs,
                   BackwardFn backward);

  /// Reverse sweep from a scalar loss. Consumes the tape.
  Gradients<T> backward(const Tensor<T>& loss);

  bool owns(const Tensor<T>& t) const;
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t serial() const noexcept { return serial_; }
  const std::string& op_name(std::size_t index) const { return nodes_.at(index).op; }

 private:
  struct Node {
    std::string op;
    std::vector<std::optional<std::size_t>> inputs;
    Shape shape;
    BackwardFn backward;
  };

  std::uint64_t serial_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Records through `tape` when it is non-null; otherwise returns output as-is.
template <typename T>
Tensor<T> record_op(Tape<T>* tape, std::string_view op, Tensor<T> output,
                    const std::vector<const Tensor<T>*>& inputs, typename Tape<T>::BackwardFn backward) {
  if (tape == nullptr) return output;
  return tape->record(op, std::move(output), inputs, std::move(backward));
}

extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace microresnet
