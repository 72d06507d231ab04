#pragma once

#include <cstddef>
#include <span>

#include "microresnet/rng.hpp"
#include "microresnet/tape.hpp"
#include "microresnet/tensor.hpp"

namespace microresnet {

enum class Mode { train, eval };

// Differentiable ops. Each one records itself on `tape` when the tape is
// non-null and at least one input is tracked on it.

/// Elementwise sum. `b` may also be a per-channel bias of length a.dim(1),
/// broadcast over every other axis.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

/// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

/// Sum of all elements as a one-element tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr);

/// Cross-correlation of x[N,Cin,H,W] with w[Cout,Cin,Kh,Kw] plus bias[Cout],
/// zero padding `pad` on every side.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad, Tape<T>* tape = nullptr);

/// Mean over non-overlapping k x k windows (stride k).
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k, Tape<T>* tape = nullptr);

/// Max over non-overlapping k x k windows; gradient goes to the first maximum
/// in row-major window order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k, Tape<T>* tape = nullptr);

/// Inverted dropout. Identity in eval mode.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng, Tape<T>* tape = nullptr);

/// Appends zero channels so x[N,Cin,H,W] becomes [N,c_out,H,W].
template <typename T>
Tensor<T> zero_pad_channels(const Tensor<T>& x, std::size_t c_out, Tape<T>* tape = nullptr);

/// x[N,D] * w[K,D]^T + bias[K]. 4-D inputs are flattened to [N, C*H*W].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Tape<T>* tape = nullptr);

/// Mean negative log-softmax of the labelled class, max-subtracted.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tape<T>* tape = nullptr);

/// Row-wise softmax of a [N,K] tensor (not recorded).
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace microresnet
