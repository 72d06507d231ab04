#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace microresnet {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Precision { single, double_ };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::single; }
template <>
constexpr Precision precision_of<double>() { return Precision::double_; }

/// Handle linking a tensor value to a node of one particular Tape.
struct NodeId {
  std::uint64_t tape = 0;
  std::size_t index = 0;

  friend bool operator==(const NodeId&, const NodeId&) = default;
};

/// Dense row-major array. Image batches use (batch, channel, height, width).
template <typename T>
class Tensor {
 public:
  using value_type = T;
  static constexpr Precision precision = precision_of<T>();

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// 4-D element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Scalar value of a one-element tensor.
  T item() const;

  const std::optional<NodeId>& node() const noexcept { return node_; }
  bool tracked() const noexcept { return node_.has_value(); }
  void set_node(NodeId id) { node_ = id; }
  /// Same values, no tape link.
  Tensor detached() const;

  /// Same data viewed under another shape with the same element count.
  Tensor reshaped(Shape shape) const;

  void fill(T value);

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<T> data_;
  std::optional<NodeId> node_;
};

/// Bitwise equality of shape and data (node links ignored).
template <typename T>
bool same_values(const Tensor<T>& a, const Tensor<T>& b);

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t);

extern template class Tensor<float>;
extern template class Tensor<double>;

/// Runtime switch for the non-finite check run after every forward op.
/// Defaults to on in debug builds.
bool nan_checks_enabled();
void set_nan_checks(bool enabled);

}  // namespace microresnet
