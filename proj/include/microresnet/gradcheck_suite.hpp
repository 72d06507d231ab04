#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace microresnet {

struct OpCheckReport {
  std::string op;
  std::size_t cases = 0;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;

/// Names accepted by run_op_gradcheck, in report order.
std::vector<std::string> gradcheck_op_names();

/// Finite-difference check of one op over `cases` random shapes and inputs.
/// Inputs are drawn away from non-differentiable points (ReLU kink, max-pool
/// ties). Throws ValueError for an unknown op name.
OpCheckReport run_op_gradcheck(std::string_view op, std::uint64_t seed, double eps = 1e-5, std::size_t cases = 20,
                               double tolerance = kGradCheckTolerance);

}  // namespace microresnet
