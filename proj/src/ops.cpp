#include "microresnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "microresnet/errors.hpp"
#include "microresnet/parallel.hpp"

namespace microresnet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Samples per partial weight-gradient sum in conv2d backward. Fixed so the
// reduction order does not depend on the thread count.
constexpr std::size_t kReductionGroup = 8;

template <typename T>
Tensor<T> finish(Tape<T>* tape, std::string_view op, Tensor<T> out, const std::vector<const Tensor<T>*>& inputs,
                 typename Tape<T>::BackwardFn backward) {
  if (nan_checks_enabled() && !out.all_finite()) {
    throw NumericalError(std::string(op) + " produced non-finite values");
  }
  return record_op(tape, op, std::move(out), inputs, std::move(backward));
}

void require_rank4(const Shape& s, std::string_view op) {
  if (s.size() != 4) {
    throw ShapeError(std::string(op) + ": expected a 4-D [N,C,H,W] tensor, got " + to_string(s));
  }
}

bool bias_broadcast(const Shape& a, const Shape& b) {
  return a.size() >= 2 && b.size() == 1 && b[0] == a[1];
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t out_plane() const { return ho * wo; }
};

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* dim) {
  const std::size_t padded = in + 2 * pad;
  if (k > padded) {
    throw ShapeError(std::string("conv2d: kernel ") + dim + " " + std::to_string(k) + " exceeds padded input " + dim +
                     " " + std::to_string(padded));
  }
  if ((padded - k) % stride != 0) {
    throw ShapeError(std::string("conv2d: output ") + dim + " is not integral: (" + std::to_string(in) + " + 2*" +
                     std::to_string(pad) + " - " + std::to_string(k) + ") is not divisible by stride " +
                     std::to_string(stride));
  }
  return (padded - k) / stride + 1;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oi * g.wo;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            dst[oj] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[jj];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          const T* src = row + oi * g.wo;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.w)) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

struct PoolGeometry {
  std::size_t n, c, h, w, k, ho, wo;
};

PoolGeometry pool_geometry(const Shape& s, std::size_t k, std::string_view op) {
  require_rank4(s, op);
  if (k == 0) throw ValueError(std::string(op) + ": window size must be positive");
  if (s[2] % k != 0 || s[3] % k != 0) {
    throw ShapeError(std::string(op) + ": spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " is not divisible by " + std::to_string(k));
  }
  return {s[0], s[1], s[2], s[3], k, s[2] / k, s[3] / k};
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  if (a.shape() == b.shape()) {
    Tensor<T> out = a.detached();
    auto o = out.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return finish<T>(tape, "add", std::move(out), {&a, &b}, [](const Tensor<T>& g, const std::vector<bool>&) {
      return std::vector<Tensor<T>>{g.detached(), g.detached()};
    });
  }
  if (!bias_broadcast(a.shape(), b.shape())) {
    throw ShapeError("add: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t channels = a.dim(1);
  const std::size_t inner = a.size() / (batch * channels);
  Tensor<T> out = a.detached();
  auto o = out.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      T* p = o.data() + (n * channels + c) * inner;
      const T bias = b[c];
      for (std::size_t i = 0; i < inner; ++i) p[i] += bias;
    }
  }
  const Shape bias_shape = b.shape();
  return finish<T>(tape, "add", std::move(out), {&a, &b},
                   [=](const Tensor<T>& g, const std::vector<bool>& needs) {
                     std::vector<Tensor<T>> grads(2);
                     if (needs[0]) grads[0] = g.detached();
                     if (needs[1]) {
                       Tensor<T> gb(bias_shape);
                       for (std::size_t n = 0; n < batch; ++n) {
                         for (std::size_t c = 0; c < channels; ++c) {
                           const T* p = g.data().data() + (n * channels + c) * inner;
                           T acc = 0;
                           for (std::size_t i = 0; i < inner; ++i) acc += p[i];
                           gb[c] += acc;
                         }
                       }
                       grads[1] = std::move(gb);
                     }
                     return grads;
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  Tensor<T> out = a.detached();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  Tensor<T> sa = a.detached();
  Tensor<T> sb = b.detached();
  return finish<T>(tape, "mul", std::move(out), {&a, &b},
                   [sa = std::move(sa), sb = std::move(sb)](const Tensor<T>& g, const std::vector<bool>& needs) {
                     std::vector<Tensor<T>> grads(2);
                     if (needs[0]) {
                       grads[0] = g.detached();
                       for (std::size_t i = 0; i < sb.size(); ++i) grads[0][i] *= sb[i];
                     }
                     if (needs[1]) {
                       grads[1] = g.detached();
                       for (std::size_t i = 0; i < sa.size(); ++i) grads[1][i] *= sa[i];
                     }
                     return grads;
                   });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const Shape in_shape = x.shape();
  return finish<T>(tape, "sum", Tensor<T>::scalar(acc), {&x}, [in_shape](const Tensor<T>& g, const std::vector<bool>&) {
    return std::vector<Tensor<T>>{Tensor<T>(in_shape, g[0])};
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape) {
  Tensor<T> out = x.detached();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  Tensor<T> saved = x.tracked() && tape ? x.detached() : Tensor<T>();
  return finish<T>(tape, "relu", std::move(out), {&x},
                   [saved = std::move(saved)](const Tensor<T>& g, const std::vector<bool>&) {
                     Tensor<T> gx = g.detached();
                     for (std::size_t i = 0; i < gx.size(); ++i) {
                       if (!(saved[i] > T(0))) gx[i] = T(0);
                     }
                     return std::vector<Tensor<T>>{std::move(gx)};
                   });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride, std::size_t pad,
                 Tape<T>* tape) {
  require_rank4(x.shape(), "conv2d input");
  require_rank4(w.shape(), "conv2d weight");
  if (stride == 0) throw ValueError("conv2d: stride must be at least 1");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " has " + std::to_string(x.dim(1)) +
                     " channels but weight " + to_string(w.shape()) + " expects " + std::to_string(w.dim(1)));
  }
  if (bias.shape() != Shape{w.dim(0)}) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(w.dim(0)) +
                     " output channels");
  }
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.stride = stride;
  g.pad = pad;
  g.ho = conv_extent(g.h, g.kh, stride, pad, "height");
  g.wo = conv_extent(g.w, g.kw, stride, pad, "width");

  Tensor<T> out(Shape{g.n, g.cout, g.ho, g.wo});
  const std::size_t in_sample = g.cin * g.h * g.w;
  const std::size_t out_sample = g.cout * g.out_plane();
  const T* xp = x.data().data();
  const T* bp = bias.data().data();
  T* op = out.data().data();
  ConstMatrixMap<T> wm(w.data().data(), g.cout, g.patch());
  parallel_for(g.n, [&](std::size_t n) {
    std::vector<T> cols(g.patch() * g.out_plane());
    im2col(xp + n * in_sample, g, cols.data());
    MatrixMap<T> om(op + n * out_sample, g.cout, g.out_plane());
    om.noalias() = wm * ConstMatrixMap<T>(cols.data(), g.patch(), g.out_plane());
    for (std::size_t co = 0; co < g.cout; ++co) om.row(co).array() += bp[co];
  });

  const bool keep = tape != nullptr && (x.tracked() || w.tracked() || bias.tracked());
  Tensor<T> sx = keep ? x.detached() : Tensor<T>();
  Tensor<T> sw = keep ? w.detached() : Tensor<T>();
  return finish<T>(
      tape, "conv2d", std::move(out), {&x, &w, &bias},
      [g, sx = std::move(sx), sw = std::move(sw)](const Tensor<T>& grad, const std::vector<bool>& needs) {
        const std::size_t in_sample = g.cin * g.h * g.w;
        const std::size_t out_sample = g.cout * g.out_plane();
        std::vector<Tensor<T>> grads(3);
        if (needs[0]) grads[0] = Tensor<T>(sx.shape());
        const bool want_w = needs[1];
        const std::size_t groups = (g.n + kReductionGroup - 1) / kReductionGroup;
        std::vector<std::vector<T>> partial(want_w ? groups : 0);
        ConstMatrixMap<T> wm(sw.data().data(), g.cout, g.patch());
        parallel_for(groups, [&](std::size_t group) {
          std::vector<T> cols(g.patch() * g.out_plane());
          std::vector<T> dcols(needs[0] ? cols.size() : 0);
          if (want_w) partial[group].assign(g.cout * g.patch(), T(0));
          const std::size_t end = std::min(g.n, (group + 1) * kReductionGroup);
          for (std::size_t n = group * kReductionGroup; n < end; ++n) {
            ConstMatrixMap<T> gm(grad.data().data() + n * out_sample, g.cout, g.out_plane());
            if (want_w) {
              im2col(sx.data().data() + n * in_sample, g, cols.data());
              MatrixMap<T> pm(partial[group].data(), g.cout, g.patch());
              pm.noalias() += gm * ConstMatrixMap<T>(cols.data(), g.patch(), g.out_plane()).transpose();
            }
            if (needs[0]) {
              MatrixMap<T>(dcols.data(), g.patch(), g.out_plane()).noalias() = wm.transpose() * gm;
              col2im_add(dcols.data(), g, grads[0].data().data() + n * in_sample);
            }
          }
        });
        if (want_w) {
          Tensor<T> gw(sw.shape());
          for (const auto& p : partial) {
            for (std::size_t i = 0; i < p.size(); ++i) gw[i] += p[i];
          }
          grads[1] = std::move(gw);
        }
        if (needs[2]) {
          Tensor<T> gb(Shape{g.cout});
          for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              const T* p = grad.data().data() + n * out_sample + co * g.out_plane();
              T acc = 0;
              for (std::size_t i = 0; i < g.out_plane(); ++i) acc += p[i];
              gb[co] += acc;
            }
          }
          grads[2] = std::move(gb);
        }
        return grads;
      });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k, Tape<T>* tape) {
  const PoolGeometry g = pool_geometry(x.shape(), k, "avg_pool2d");
  Tensor<T> out(Shape{g.n, g.c, g.ho, g.wo});
  const T scale = T(1) / static_cast<T>(k * k);
  for (std::size_t plane = 0; plane < g.n * g.c; ++plane) {
    const T* src = x.data().data() + plane * g.h * g.w;
    T* dst = out.data().data() + plane * g.ho * g.wo;
    for (std::size_t oi = 0; oi < g.ho; ++oi) {
      for (std::size_t oj = 0; oj < g.wo; ++oj) {
        T acc = 0;
        for (std::size_t di = 0; di < k; ++di) {
          for (std::size_t dj = 0; dj < k; ++dj) acc += src[(oi * k + di) * g.w + oj * k + dj];
        }
        dst[oi * g.wo + oj] = acc * scale;
      }
    }
  }
  const Shape in_shape = x.shape();
  return finish<T>(tape, "avg_pool2d", std::move(out), {&x},
                   [g, scale, in_shape](const Tensor<T>& grad, const std::vector<bool>&) {
                     Tensor<T> gx(in_shape);
                     for (std::size_t plane = 0; plane < g.n * g.c; ++plane) {
                       const T* src = grad.data().data() + plane * g.ho * g.wo;
                       T* dst = gx.data().data() + plane * g.h * g.w;
                       for (std::size_t i = 0; i < g.h; ++i) {
                         for (std::size_t j = 0; j < g.w; ++j) {
                           dst[i * g.w + j] = src[(i / g.k) * g.wo + j / g.k] * scale;
                         }
                       }
                     }
                     return std::vector<Tensor<T>>{std::move(gx)};
                   });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k, Tape<T>* tape) {
  const PoolGeometry g = pool_geometry(x.shape(), k, "max_pool2d");
  Tensor<T> out(Shape{g.n, g.c, g.ho, g.wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t plane = 0; plane < g.n * g.c; ++plane) {
    const std::size_t base = plane * g.h * g.w;
    const T* src = x.data().data() + base;
    for (std::size_t oi = 0; oi < g.ho; ++oi) {
      for (std::size_t oj = 0; oj < g.wo; ++oj) {
        std::size_t best = oi * k * g.w + oj * k;
        for (std::size_t di = 0; di < k; ++di) {
          for (std::size_t dj = 0; dj < k; ++dj) {
            const std::size_t idx = (oi * k + di) * g.w + oj * k + dj;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = plane * g.ho * g.wo + oi * g.wo + oj;
        out[o] = src[best];
        argmax[o] = base + best;
      }
    }
  }
  const Shape in_shape = x.shape();
  return finish<T>(tape, "max_pool2d", std::move(out), {&x},
                   [argmax = std::move(argmax), in_shape](const Tensor<T>& grad, const std::vector<bool>&) {
                     Tensor<T> gx(in_shape);
                     for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += grad[o];
                     return std::vector<Tensor<T>>{std::move(gx)};
                   });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng, Tape<T>* tape) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValueError("dropout: rate " + std::to_string(rate) + " is outside [0, 1)");
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : scale;
  Tensor<T> out = x.detached();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return finish<T>(tape, "dropout", std::move(out), {&x},
                   [mask = std::move(mask)](const Tensor<T>& grad, const std::vector<bool>&) {
                     Tensor<T> gx = grad.detached();
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask[i];
                     return std::vector<Tensor<T>>{std::move(gx)};
                   });
}

template <typename T>
Tensor<T> zero_pad_channels(const Tensor<T>& x, std::size_t c_out, Tape<T>* tape) {
  require_rank4(x.shape(), "zero_pad_channels");
  const std::size_t n = x.dim(0), cin = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (c_out < cin) {
    throw ShapeError("zero_pad_channels: cannot shrink " + std::to_string(cin) + " channels to " +
                     std::to_string(c_out));
  }
  Tensor<T> out(Shape{n, c_out, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(x.data().data() + b * cin * plane, cin * plane, out.data().data() + b * c_out * plane);
  }
  const Shape in_shape = x.shape();
  return finish<T>(tape, "zero_pad_channels", std::move(out), {&x},
                   [=](const Tensor<T>& grad, const std::vector<bool>&) {
                     Tensor<T> gx(in_shape);
                     for (std::size_t b = 0; b < n; ++b) {
                       std::copy_n(grad.data().data() + b * c_out * plane, cin * plane,
                                   gx.data().data() + b * cin * plane);
                     }
                     return std::vector<Tensor<T>>{std::move(gx)};
                   });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Tape<T>* tape) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("linear: expected a 2-D or 4-D input, got " + to_string(x.shape()));
  }
  if (w.rank() != 2) throw ShapeError("linear: weight must be 2-D, got " + to_string(w.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t d = x.size() / n;
  const std::size_t k = w.dim(0);
  if (w.dim(1) != d) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " has " + std::to_string(d) +
                     " features but weight " + to_string(w.shape()) + " expects " + std::to_string(w.dim(1)));
  }
  if (bias.shape() != Shape{k}) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match " + std::to_string(k) + " outputs");
  }
  Tensor<T> out(Shape{n, k});
  ConstMatrixMap<T> xm(x.data().data(), n, d);
  ConstMatrixMap<T> wm(w.data().data(), k, d);
  MatrixMap<T> om(out.data().data(), n, k);
  om.noalias() = xm * wm.transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) om(i, j) += bias[j];
  }
  const bool keep = tape != nullptr && (x.tracked() || w.tracked() || bias.tracked());
  Tensor<T> sx = keep ? x.detached() : Tensor<T>();
  Tensor<T> sw = keep ? w.detached() : Tensor<T>();
  return finish<T>(tape, "linear", std::move(out), {&x, &w, &bias},
                   [n, d, k, sx = std::move(sx), sw = std::move(sw)](const Tensor<T>& grad,
                                                                      const std::vector<bool>& needs) {
                     std::vector<Tensor<T>> grads(3);
                     ConstMatrixMap<T> gm(grad.data().data(), n, k);
                     if (needs[0]) {
                       grads[0] = Tensor<T>(sx.shape());
                       MatrixMap<T>(grads[0].data().data(), n, d).noalias() =
                           gm * ConstMatrixMap<T>(sw.data().data(), k, d);
                     }
                     if (needs[1]) {
                       grads[1] = Tensor<T>(sw.shape());
                       MatrixMap<T>(grads[1].data().data(), k, d).noalias() =
                           gm.transpose() * ConstMatrixMap<T>(sx.data().data(), n, d);
                     }
                     if (needs[2]) {
                       grads[2] = Tensor<T>(Shape{k});
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < k; ++j) grads[2][j] += gm(i, j);
                       }
                     }
                     return grads;
                   });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected [N,K] logits, got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out = logits.detached();
  for (std::size_t i = 0; i < n; ++i) {
    T* row = out.data().data() + i * k;
    const T peak = *std::max_element(row, row + k);
    T total = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= total;
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tape<T>* tape) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: expected [N,K] logits, got " + to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ValueError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " is outside [0, " + std::to_string(k) + ")");
    }
  }
  Tensor<T> probs = softmax(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    const T peak = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - peak));
    total += std::log(denom) - static_cast<double>(row[labels[i]] - peak);
  }
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  std::vector<int> saved_labels(labels.begin(), labels.end());
  return finish<T>(tape, "softmax_cross_entropy", std::move(loss), {&logits},
                   [n, k, probs = std::move(probs), saved_labels = std::move(saved_labels)](
                       const Tensor<T>& grad, const std::vector<bool>&) {
                     Tensor<T> gx = probs;
                     for (std::size_t i = 0; i < n; ++i) gx[i * k + static_cast<std::size_t>(saved_labels[i])] -= T(1);
                     const T scale = grad[0] / static_cast<T>(n);
                     for (auto& v : gx.data()) v *= scale;
                     return std::vector<Tensor<T>>{std::move(gx)};
                   });
}

#define MICRORESNET_INSTANTIATE_OPS(T)                                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&, Tape<T>*);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&, Tape<T>*);                                      \
  template Tensor<T> sum(const Tensor<T>&, Tape<T>*);                                                        \
  template Tensor<T> relu(const Tensor<T>&, Tape<T>*);                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,  \
                            Tape<T>*);                                                                       \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t, Tape<T>*);                                    \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, Tape<T>*);                                    \
  template Tensor<T> dropout(const Tensor<T>&, double, Mode, Rng&, Tape<T>*);                                \
  template Tensor<T> zero_pad_channels(const Tensor<T>&, std::size_t, Tape<T>*);                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tape<T>*);                 \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>, Tape<T>*);                \
  template Tensor<T> softmax(const Tensor<T>&);

MICRORESNET_INSTANTIATE_OPS(float)
MICRORESNET_INSTANTIATE_OPS(double)

}  // namespace microresnet
