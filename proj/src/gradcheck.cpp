#include "microresnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "microresnet/errors.hpp"

namespace microresnet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const CheckedFunction& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Tensor<double>> watched;
  watched.reserve(inputs.size());
  for (const auto& in : inputs) watched.push_back(tape.watch(in.detached()));
  return f(tape, watched).item();
}

}  // namespace

GradCheckResult grad_check(const CheckedFunction& f, std::vector<Tensor<double>> inputs, double eps) {
  if (!(eps > 0.0)) throw ValueError("grad_check: eps must be positive");
  Tape<double> tape;
  std::vector<Tensor<double>> watched;
  watched.reserve(inputs.size());
  for (const auto& in : inputs) watched.push_back(tape.watch(in.detached()));
  const Tensor<double> out = f(tape, watched);
  const Gradients<double> grads = tape.backward(out);

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = grads.of(watched[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double original = inputs[k][i];
      inputs[k][i] = original + eps;
      const double plus = evaluate(f, inputs);
      inputs[k][i] = original - eps;
      const double minus = evaluate(f, inputs);
      inputs[k][i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.elements;
    }
  }
  return result;
}

}  // namespace microresnet
