#include "microresnet/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "microresnet/errors.hpp"
#include "microresnet/gradcheck.hpp"
#include "microresnet/layers.hpp"
#include "microresnet/ops.hpp"

namespace microresnet {

namespace {

using TensorD = Tensor<double>;
using OpFn = std::function<TensorD(Tape<double>&, std::span<const TensorD>)>;

struct Case {
  std::vector<TensorD> inputs;
  OpFn fn;
};

using CaseMaker = std::function<Case(Rng&, std::size_t index)>;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_index(hi - lo + 1));
}

TensorD random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal() * scale;
  return t;
}

// Values with |v| >= margin, keeping ReLU away from its kink.
TensorD away_from_zero(Shape shape, Rng& rng, double margin = 0.05) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) {
    const double u = rng.normal();
    v = u < 0 ? u - margin : u + margin;
  }
  return t;
}

// Pairwise distinct values on a 0.05 grid, so max-pool has no near ties.
TensorD distinct_values(Shape shape, Rng& rng) {
  TensorD t(std::move(shape));
  std::vector<std::size_t> rank(t.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  for (std::size_t i = rank.size(); i-- > 1;) std::swap(rank[i], rank[rng.uniform_index(i + 1)]);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 * static_cast<double>(rank[i]) - 1.0;
  return t;
}

Shape random_shape(Rng& rng) {
  Shape s(pick(rng, 1, 4));
  for (auto& d : s) d = pick(rng, 1, 4);
  return s;
}

// Reduces an op output to a scalar with fixed pseudo-random weights so every
// output element contributes a distinct coefficient.
CheckedFunction projected(OpFn fn, std::uint64_t seed) {
  return [fn = std::move(fn), seed](Tape<double>& tape, std::span<const TensorD> inputs) {
    const TensorD out = fn(tape, inputs);
    Rng rng(seed);
    TensorD weights = random_tensor(out.shape(), rng);
    return sum(mul(out, weights, &tape), &tape);
  };
}

Case conv_case(Rng& rng, std::size_t index) {
  std::size_t n, cin, cout, k, stride, pad, h, w;
  if (index == 0) {
    n = 2, cin = 3, cout = 4, k = 3, stride = 1, pad = 1, h = 5, w = 5;
  } else {
    n = pick(rng, 1, 2);
    cin = pick(rng, 1, 3);
    cout = pick(rng, 1, 4);
    k = pick(rng, 1, 3);
    stride = pick(rng, 1, 2);
    pad = pick(rng, 0, std::min<std::size_t>(1, k - 1));
    const auto extent = [&](std::size_t out) {
      std::size_t size = (out - 1) * stride + k;
      return size > 2 * pad ? size - 2 * pad : size + stride;
    };
    h = extent(pick(rng, 1, 4));
    w = extent(pick(rng, 1, 4));
    while ((h + 2 * pad - k) % stride != 0) ++h;
    while ((w + 2 * pad - k) % stride != 0) ++w;
  }
  Case c;
  c.inputs = {random_tensor({n, cin, h, w}, rng), random_tensor({cout, cin, k, k}, rng),
              random_tensor({cout}, rng)};
  c.fn = [stride, pad](Tape<double>& tape, std::span<const TensorD> in) {
    return conv2d(in[0], in[1], in[2], stride, pad, &tape);
  };
  return c;
}

Case basic_block_case(Rng& rng, std::size_t index) {
  const std::size_t n = pick(rng, 1, 2);
  const std::size_t cin = pick(rng, 1, 3);
  const std::size_t cout = cin + pick(rng, 0, 2);
  const std::size_t side = pick(rng, 2, 4);
  const Mode mode = index % 2 == 0 ? Mode::train : Mode::eval;
  const std::uint64_t dropout_seed = rng.next_u64();
  Case c;
  c.inputs = {random_tensor({n, cin, side, side}, rng), random_tensor({cout, cin, 3, 3}, rng, 0.5),
              random_tensor({cout}, rng, 0.1), random_tensor({cout, cout, 3, 3}, rng, 0.5),
              random_tensor({cout}, rng, 0.1)};
  c.fn = [cin, cout, mode, dropout_seed](Tape<double>& tape, std::span<const TensorD> in) {
    BasicBlock<double> block = BasicBlock<double>::create(cin, cout);
    block.conv1.weight = in[1];
    block.conv1.bias = in[2];
    block.conv2.weight = in[3];
    block.conv2.bias = in[4];
    Rng rng(dropout_seed);
    return basic_block_forward(block, in[0], mode, rng, &tape);
  };
  return c;
}

const std::vector<std::pair<std::string, CaseMaker>>& registry() {
  static const std::vector<std::pair<std::string, CaseMaker>> ops = {
      {"add",
       [](Rng& rng, std::size_t) {
         const Shape s = random_shape(rng);
         return Case{{random_tensor(s, rng), random_tensor(s, rng)},
                     [](Tape<double>& t, std::span<const TensorD> in) { return add(in[0], in[1], &t); }};
       }},
      {"bias_add",
       [](Rng& rng, std::size_t index) {
         const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 4);
         const Shape s = index % 2 == 0 ? Shape{n, c, pick(rng, 1, 4), pick(rng, 1, 4)} : Shape{n, c};
         return Case{{random_tensor(s, rng), random_tensor({c}, rng)},
                     [](Tape<double>& t, std::span<const TensorD> in) { return add(in[0], in[1], &t); }};
       }},
      {"mul",
       [](Rng& rng, std::size_t) {
         const Shape s = random_shape(rng);
         return Case{{random_tensor(s, rng), random_tensor(s, rng)},
                     [](Tape<double>& t, std::span<const TensorD> in) { return mul(in[0], in[1], &t); }};
       }},
      {"sum",
       [](Rng& rng, std::size_t) {
         return Case{{random_tensor(random_shape(rng), rng)},
                     [](Tape<double>& t, std::span<const TensorD> in) { return sum(in[0], &t); }};
       }},
      {"relu",
       [](Rng& rng, std::size_t) {
         return Case{{away_from_zero(random_shape(rng), rng)},
                     [](Tape<double>& t, std::span<const TensorD> in) { return relu(in[0], &t); }};
       }},
      {"conv2d", conv_case},
      {"avg_pool2d",
       [](Rng& rng, std::size_t index) {
         const std::size_t k = index == 0 ? 2 : pick(rng, 1, 3);
         const Shape s = index == 0 ? Shape{1, 2, 4, 4}
                                    : Shape{pick(rng, 1, 2), pick(rng, 1, 3), k * pick(rng, 1, 3), k * pick(rng, 1, 3)};
         return Case{{random_tensor(s, rng)},
                     [k](Tape<double>& t, std::span<const TensorD> in) { return avg_pool2d(in[0], k, &t); }};
       }},
      {"max_pool2d",
       [](Rng& rng, std::size_t) {
         const std::size_t k = pick(rng, 1, 3);
         const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), k * pick(rng, 1, 3), k * pick(rng, 1, 3)};
         return Case{{distinct_values(s, rng)},
                     [k](Tape<double>& t, std::span<const TensorD> in) { return max_pool2d(in[0], k, &t); }};
       }},
      {"dropout",
       [](Rng& rng, std::size_t index) {
         const double rate = index % 2 == 0 ? 0.5 : 0.25;
         const std::uint64_t mask_seed = rng.next_u64();
         return Case{{random_tensor(random_shape(rng), rng)},
                     [rate, mask_seed](Tape<double>& t, std::span<const TensorD> in) {
                       Rng mask_rng(mask_seed);
                       return dropout(in[0], rate, Mode::train, mask_rng, &t);
                     }};
       }},
      {"zero_pad_channels",
       [](Rng& rng, std::size_t) {
         const std::size_t c = pick(rng, 1, 3);
         const std::size_t target = c + pick(rng, 0, 3);
         const Shape s{pick(rng, 1, 2), c, pick(rng, 1, 3), pick(rng, 1, 3)};
         return Case{{random_tensor(s, rng)}, [target](Tape<double>& t, std::span<const TensorD> in) {
                       return zero_pad_channels(in[0], target, &t);
                     }};
       }},
      {"linear",
       [](Rng& rng, std::size_t index) {
         Shape xs;
         std::size_t k;
         if (index == 0) {
           xs = {3, 7};
           k = 5;
         } else {
           xs = index % 3 == 0 ? Shape{pick(rng, 1, 3), pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3)}
                               : Shape{pick(rng, 1, 4), pick(rng, 1, 8)};
           k = pick(rng, 1, 6);
         }
         const std::size_t d = element_count(xs) / xs[0];
         return Case{{random_tensor(xs, rng), random_tensor({k, d}, rng), random_tensor({k}, rng)},
                     [](Tape<double>& t, std::span<const TensorD> in) { return linear(in[0], in[1], in[2], &t); }};
       }},
      {"softmax_cross_entropy",
       [](Rng& rng, std::size_t) {
         const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 10);
         std::vector<int> labels(n);
         for (auto& l : labels) l = static_cast<int>(rng.uniform_index(k));
         return Case{{random_tensor({n, k}, rng, 2.0)},
                     [labels](Tape<double>& t, std::span<const TensorD> in) {
                       return softmax_cross_entropy(in[0], std::span<const int>(labels), &t);
                     }};
       }},
      {"shortcut_adapt",
       [](Rng& rng, std::size_t) {
         const std::size_t c = pick(rng, 1, 3);
         const std::size_t target = c + pick(rng, 0, 2);
         const std::size_t divisor = pick(rng, 1, 2);
         const Shape s{pick(rng, 1, 2), c, 2 * pick(rng, 1, 2), 2 * pick(rng, 1, 2)};
         return Case{{random_tensor(s, rng)}, [target, divisor](Tape<double>& t, std::span<const TensorD> in) {
                       return shortcut_adapt(in[0], target, divisor, &t);
                     }};
       }},
      {"basic_block", basic_block_case},
  };
  return ops;
}

std::uint64_t name_key(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h;
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

OpCheckReport run_op_gradcheck(std::string_view op, std::uint64_t seed, double eps, std::size_t cases,
                               double tolerance) {
  const auto& ops = registry();
  const auto it = std::find_if(ops.begin(), ops.end(), [&](const auto& entry) { return entry.first == op; });
  if (it == ops.end()) throw ValueError("unknown op '" + std::string(op) + "'");
  OpCheckReport report;
  report.op = std::string(op);
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng = Rng::derive(seed, name_key(op), i);
    Case c = it->second(rng, i);
    const GradCheckResult result = grad_check(projected(c.fn, rng.next_u64()), std::move(c.inputs), eps);
    report.max_rel_error = std::max(report.max_rel_error, result.max_rel_error);
    report.elements += result.elements;
    ++report.cases;
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace microresnet
