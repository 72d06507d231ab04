#pragma once

#include <functional>
#include <span>
#include <vector>

#include "microresnet/tape.hpp"
#include "microresnet/tensor.hpp"

namespace microresnet {

/// A scalar-valued computation over `inputs`, recorded on `tape`.
using CheckedFunction =
    std::function<Tensor<double>(Tape<double>& tape, std::span<const Tensor<double>> inputs)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t elements = 0;
};

/// Compares tape gradients of f against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps), element by element. The relative error of
/// one element is |a - b| / max(|a|, |b|, 1e-8).
GradCheckResult grad_check(const CheckedFunction& f, std::vector<Tensor<double>> inputs, double eps = 1e-5);

/// Relative error used by grad_check.
double relative_error(double analytic, double numeric);

}  // namespace microresnet
