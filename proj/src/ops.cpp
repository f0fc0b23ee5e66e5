#include "mushroom/ops.hpp"

#include "mushroom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mushroom::ops {

using detail::make_result;
using detail::TensorImpl;

namespace {

void require_defined(std::string_view op, const Tensor& t) {
  if (!t.defined()) throw ArgumentError(std::string(op) + ": undefined tensor argument");
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  require_defined(op, t);
  if (t.shape().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + t.shape().str());
  }
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

DType common_dtype(std::string_view op, std::initializer_list<Tensor> ts) {
  DType dtype = DType::F64;
  bool first = true;
  for (const auto& t : ts) {
    if (!t.defined()) continue;
    if (first) {
      dtype = t.dtype();
      first = false;
    } else if (t.dtype() != dtype) {
      throw ArgumentError(std::string(op) + ": mixed precisions");
    }
  }
  return dtype;
}

template <class F, class DF>
Tensor unary(std::string_view op, const Tensor& x, F f, DF df) {
  require_defined(op, x);
  auto xi = x.impl();
  std::vector<double> out(xi->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xi->data[i]);
  return make_result(op, x.shape(), x.dtype(), std::move(out), {x},
                     [xi, df](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto& g = xi->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += o.grad[i] * df(xi->data[i], o.data[i]);
                       }
                     });
}

void accumulate(const std::shared_ptr<TensorImpl>& t, std::span<const double> g, double factor) {
  if (!t->requires_grad) return;
  auto& dst = t->ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
}

struct ConvGeometry {
  std::int64_t n, c, h, w;     // input
  std::int64_t co, cig, kh, kw; // weight (cig = input channels per group)
  std::int64_t oh, ow;
  int stride, padding, groups;
};

// Half-open range of output columns whose input column ow*stride-padding+k
// falls inside [0, width).
std::pair<std::int64_t, std::int64_t> valid_outputs(std::int64_t width, std::int64_t out,
                                                    std::int64_t k, int stride, int padding) {
  std::int64_t lo = 0;
  const std::int64_t shift = padding - k; // need ow*stride >= shift
  if (shift > 0) lo = (shift + stride - 1) / stride;
  // need ow*stride - shift <= width - 1
  std::int64_t hi = (width - 1 + shift);
  hi = hi < 0 ? 0 : hi / stride + 1;
  return {std::min(lo, out), std::clamp<std::int64_t>(hi, 0, out)};
}

Tensor conv_generic(std::string_view op, const Tensor& x, const Tensor& w, const Tensor& b,
                    int stride, int padding, int groups) {
  require_rank(op, x, 4);
  require_rank(op, w, 4);
  if (stride < 1) throw ArgumentError(std::string(op) + ": stride must be >= 1");
  if (padding < 0) throw ArgumentError(std::string(op) + ": padding must be >= 0");
  const DType dtype = common_dtype(op, {x, w, b});

  ConvGeometry g{};
  g.n = x.shape()[0];
  g.c = x.shape()[1];
  g.h = x.shape()[2];
  g.w = x.shape()[3];
  g.co = w.shape()[0];
  g.cig = w.shape()[1];
  g.kh = w.shape()[2];
  g.kw = w.shape()[3];
  g.stride = stride;
  g.padding = padding;
  g.groups = groups;
  if (g.cig * groups != g.c || g.co % groups != 0) {
    throw ShapeError(std::string(op) + ": input " + x.shape().str() +
                     " incompatible with weight " + w.shape().str());
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw ShapeError(std::string(op) + ": kernel of weight " + w.shape().str() +
                     " exceeds padded input " + x.shape().str());
  }
  if (b.defined() && (b.shape().rank() != 1 || b.shape()[0] != g.co)) {
    throw ShapeError(std::string(op) + ": bias " + b.shape().str() + " does not match weight " +
                     w.shape().str());
  }
  g.oh = conv_out_extent(g.h, static_cast<int>(g.kh), stride, padding);
  g.ow = conv_out_extent(g.w, static_cast<int>(g.kw), stride, padding);

  const std::int64_t cog = g.co / groups;
  const auto& xd = x.impl()->data;
  const auto& wd = w.impl()->data;
  std::vector<double> out(static_cast<std::size_t>(g.n * g.co * g.oh * g.ow), 0.0);

  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t co = 0; co < g.co; ++co) {
      double* op_plane = out.data() + (n * g.co + co) * g.oh * g.ow;
      if (b.defined()) std::fill(op_plane, op_plane + g.oh * g.ow, b.impl()->data[co]);
      const std::int64_t grp = co / cog;
      for (std::int64_t cl = 0; cl < g.cig; ++cl) {
        const std::int64_t ci = grp * g.cig + cl;
        const double* xp = xd.data() + (n * g.c + ci) * g.h * g.w;
        const double* wp = wd.data() + (co * g.cig + cl) * g.kh * g.kw;
        for (std::int64_t ki = 0; ki < g.kh; ++ki) {
          for (std::int64_t oy = 0; oy < g.oh; ++oy) {
            const std::int64_t iy = oy * stride - padding + ki;
            if (iy < 0 || iy >= g.h) continue;
            const double* xrow = xp + iy * g.w;
            double* orow = op_plane + oy * g.ow;
            for (std::int64_t kj = 0; kj < g.kw; ++kj) {
              const double wv = wp[ki * g.kw + kj];
              auto [lo, hi] = valid_outputs(g.w, g.ow, kj, stride, padding);
              const std::int64_t off = kj - padding;
              for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * xrow[ox * stride + off];
            }
          }
        }
      }
    }
  }

  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.defined() ? b.impl() : nullptr;
  Shape out_shape{g.n, g.co, g.oh, g.ow};
  return make_result(
      op, out_shape, dtype, std::move(out), {x, w, b},
      [xi, wi, bi, g, cog](const TensorImpl& o) {
        const auto& go = o.grad;
        const std::int64_t plane = g.oh * g.ow;
        if (bi && bi->requires_grad) {
          auto& gb = bi->ensure_grad();
          for (std::int64_t n = 0; n < g.n; ++n)
            for (std::int64_t co = 0; co < g.co; ++co) {
              const double* gp = go.data() + (n * g.co + co) * plane;
              double s = 0.0;
              for (std::int64_t i = 0; i < plane; ++i) s += gp[i];
              gb[co] += s;
            }
        }
        const bool want_x = xi->requires_grad;
        const bool want_w = wi->requires_grad;
        if (!want_x && !want_w) return;
        double* gx = want_x ? xi->ensure_grad().data() : nullptr;
        double* gw = want_w ? wi->ensure_grad().data() : nullptr;
        const auto& xd = xi->data;
        const auto& wd = wi->data;
        for (std::int64_t n = 0; n < g.n; ++n) {
          for (std::int64_t co = 0; co < g.co; ++co) {
            const double* gp = go.data() + (n * g.co + co) * plane;
            const std::int64_t grp = co / cog;
            for (std::int64_t cl = 0; cl < g.cig; ++cl) {
              const std::int64_t ci = grp * g.cig + cl;
              const std::int64_t xoff = (n * g.c + ci) * g.h * g.w;
              const std::int64_t woff = (co * g.cig + cl) * g.kh * g.kw;
              for (std::int64_t ki = 0; ki < g.kh; ++ki) {
                for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                  auto [lo, hi] = valid_outputs(g.w, g.ow, kj, g.stride, g.padding);
                  const std::int64_t off = kj - g.padding;
                  const double wv = wd[woff + ki * g.kw + kj];
                  double wacc = 0.0;
                  for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.padding + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    const double* grow = gp + oy * g.ow;
                    const std::int64_t xrow = xoff + iy * g.w;
                    for (std::int64_t ox = lo; ox < hi; ++ox) {
                      const std::int64_t xi_idx = xrow + ox * g.stride + off;
                      if (gw) wacc += grow[ox] * xd[xi_idx];
                      if (gx) gx[xi_idx] += wv * grow[ox];
                    }
                  }
                  if (gw) gw[woff + ki * g.kw + kj] += wacc;
                }
              }
            }
          }
        }
      });
}

} // namespace

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  if (stride < 1) throw ArgumentError("stride must be >= 1");
  const std::int64_t span = in + 2 * padding - kernel;
  if (span < 0) {
    throw ShapeError("window " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(in + 2 * padding));
  }
  return span / stride + 1;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const DType dtype = common_dtype("add", {a, b});
  auto ai = a.impl();
  auto bi = b.impl();
  std::vector<double> out(ai->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] + bi->data[i];
  return make_result("add", a.shape(), dtype, std::move(out), {a, b},
                     [ai, bi](const TensorImpl& o) {
                       accumulate(ai, o.grad, 1.0);
                       accumulate(bi, o.grad, 1.0);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const DType dtype = common_dtype("sub", {a, b});
  auto ai = a.impl();
  auto bi = b.impl();
  std::vector<double> out(ai->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] - bi->data[i];
  return make_result("sub", a.shape(), dtype, std::move(out), {a, b},
                     [ai, bi](const TensorImpl& o) {
                       accumulate(ai, o.grad, 1.0);
                       accumulate(bi, o.grad, -1.0);
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const DType dtype = common_dtype("mul", {a, b});
  auto ai = a.impl();
  auto bi = b.impl();
  std::vector<double> out(ai->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] * bi->data[i];
  return make_result("mul", a.shape(), dtype, std::move(out), {a, b},
                     [ai, bi](const TensorImpl& o) {
                       if (ai->requires_grad) {
                         auto& g = ai->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->data[i];
                       }
                       if (bi->requires_grad) {
                         auto& g = bi->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->data[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  auto xi = x.impl();
  double s = 0.0;
  for (double v : xi->data) s += v;
  return make_result("sum", Shape{1}, x.dtype(), {s}, {x}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    for (double& g : xi->ensure_grad()) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  auto xi = x.impl();
  return make_result("reshape", std::move(shape), x.dtype(), xi->data, {x},
                     [xi](const TensorImpl& o) { accumulate(xi, o.grad, 1.0); });
}

Tensor element(const Tensor& x, std::initializer_list<std::int64_t> index) {
  require_defined("element", x);
  const auto& dims = x.shape().dims();
  if (index.size() != dims.size()) throw ShapeError("element: index rank mismatch for " + x.shape().str());
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= dims[axis]) throw ShapeError("element: index out of range for " + x.shape().str());
    flat = flat * dims[axis++] + i;
  }
  auto xi = x.impl();
  const auto pos = static_cast<std::size_t>(flat);
  return make_result("element", Shape{1}, x.dtype(), {xi->data[pos]}, {x},
                     [xi, pos](const TensorImpl& o) {
                       if (xi->requires_grad) xi->ensure_grad()[pos] += o.grad[0];
                     });
}

Tensor channel_scale(const Tensor& x, const Tensor& s) {
  require_defined("channel_scale", x);
  require_rank("channel_scale", s, 2);
  const auto rank = x.shape().rank();
  if ((rank != 2 && rank != 4) || x.shape()[0] != s.shape()[0] || x.shape()[1] != s.shape()[1]) {
    throw ShapeError("channel_scale: input " + x.shape().str() + " vs scale " + s.shape().str());
  }
  const DType dtype = common_dtype("channel_scale", {x, s});
  const std::int64_t nc = s.numel();
  const std::int64_t plane = x.numel() / nc;
  auto xi = x.impl();
  auto si = s.impl();
  std::vector<double> out(xi->data.size());
  for (std::int64_t k = 0; k < nc; ++k) {
    const double f = si->data[k];
    for (std::int64_t i = 0; i < plane; ++i) out[k * plane + i] = xi->data[k * plane + i] * f;
  }
  return make_result("channel_scale", x.shape(), dtype, std::move(out), {x, s},
                     [xi, si, nc, plane](const TensorImpl& o) {
                       if (xi->requires_grad) {
                         auto& g = xi->ensure_grad();
                         for (std::int64_t k = 0; k < nc; ++k)
                           for (std::int64_t i = 0; i < plane; ++i)
                             g[k * plane + i] += o.grad[k * plane + i] * si->data[k];
                       }
                       if (si->requires_grad) {
                         auto& g = si->ensure_grad();
                         for (std::int64_t k = 0; k < nc; ++k) {
                           double acc = 0.0;
                           for (std::int64_t i = 0; i < plane; ++i)
                             acc += o.grad[k * plane + i] * xi->data[k * plane + i];
                           g[k] += acc;
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  return conv_generic("conv2d", x, w, b, stride, padding, 1);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int padding,
                        const Tensor& b) {
  require_rank("depthwise_conv2d", x, 4);
  require_rank("depthwise_conv2d", w, 4);
  const std::int64_t c = x.shape()[1];
  if (w.shape()[0] != c || w.shape()[1] != 1) {
    throw ShapeError("depthwise_conv2d: channel count mismatch between input " + x.shape().str() +
                     " and weight " + w.shape().str());
  }
  return conv_generic("depthwise_conv2d", x, w, b, stride, padding, static_cast<int>(c));
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("dense", x, 2);
  require_rank("dense", w, 2);
  const std::int64_t n = x.shape()[0], cin = x.shape()[1], cout = w.shape()[0];
  if (w.shape()[1] != cin) {
    throw ShapeError("dense: input " + x.shape().str() + " incompatible with weight " +
                     w.shape().str());
  }
  if (b.defined() && (b.shape().rank() != 1 || b.shape()[0] != cout)) {
    throw ShapeError("dense: bias " + b.shape().str() + " does not match weight " + w.shape().str());
  }
  const DType dtype = common_dtype("dense", {x, w, b});
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.defined() ? b.impl() : nullptr;
  std::vector<double> out(static_cast<std::size_t>(n * cout));
  for (std::int64_t r = 0; r < n; ++r) {
    const double* xr = xi->data.data() + r * cin;
    for (std::int64_t o = 0; o < cout; ++o) {
      const double* wr = wi->data.data() + o * cin;
      double acc = bi ? bi->data[o] : 0.0;
      for (std::int64_t i = 0; i < cin; ++i) acc += xr[i] * wr[i];
      out[r * cout + o] = acc;
    }
  }
  return make_result("dense", Shape{n, cout}, dtype, std::move(out), {x, w, b},
                     [xi, wi, bi, n, cin, cout](const TensorImpl& o) {
                       const auto& go = o.grad;
                       if (bi && bi->requires_grad) {
                         auto& gb = bi->ensure_grad();
                         for (std::int64_t r = 0; r < n; ++r)
                           for (std::int64_t c = 0; c < cout; ++c) gb[c] += go[r * cout + c];
                       }
                       if (wi->requires_grad) {
                         auto& gw = wi->ensure_grad();
                         for (std::int64_t c = 0; c < cout; ++c)
                           for (std::int64_t r = 0; r < n; ++r) {
                             const double gv = go[r * cout + c];
                             for (std::int64_t i = 0; i < cin; ++i)
                               gw[c * cin + i] += gv * xi->data[r * cin + i];
                           }
                       }
                       if (xi->requires_grad) {
                         auto& gx = xi->ensure_grad();
                         for (std::int64_t r = 0; r < n; ++r)
                           for (std::int64_t c = 0; c < cout; ++c) {
                             const double gv = go[r * cout + c];
                             for (std::int64_t i = 0; i < cin; ++i)
                               gx[r * cin + i] += gv * wi->data[c * cin + i];
                           }
                       }
                     });
}

Tensor conv1d_channels(const Tensor& z, const Tensor& w) {
  require_rank("conv1d_channels", z, 2);
  require_rank("conv1d_channels", w, 1);
  const std::int64_t k = w.shape()[0];
  if (k % 2 == 0) throw ArgumentError("conv1d_channels: kernel size must be odd, got " + std::to_string(k));
  const DType dtype = common_dtype("conv1d_channels", {z, w});
  const std::int64_t n = z.shape()[0], c = z.shape()[1], half = (k - 1) / 2;
  auto zi = z.impl();
  auto wi = w.impl();
  std::vector<double> out(static_cast<std::size_t>(n * c), 0.0);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < k; ++j) {
        const std::int64_t src = ch + j - half;
        if (src >= 0 && src < c) acc += wi->data[j] * zi->data[r * c + src];
      }
      out[r * c + ch] = acc;
    }
  return make_result("conv1d_channels", z.shape(), dtype, std::move(out), {z, w},
                     [zi, wi, n, c, k, half](const TensorImpl& o) {
                       double* gz = zi->requires_grad ? zi->ensure_grad().data() : nullptr;
                       double* gw = wi->requires_grad ? wi->ensure_grad().data() : nullptr;
                       for (std::int64_t r = 0; r < n; ++r)
                         for (std::int64_t ch = 0; ch < c; ++ch) {
                           const double gv = o.grad[r * c + ch];
                           for (std::int64_t j = 0; j < k; ++j) {
                             const std::int64_t src = ch + j - half;
                             if (src < 0 || src >= c) continue;
                             if (gz) gz[r * c + src] += gv * wi->data[j];
                             if (gw) gw[j] += gv * zi->data[r * c + src];
                           }
                         }
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const std::int64_t n = x.shape()[0], c = x.shape()[1];
  const std::int64_t plane = x.shape()[2] * x.shape()[3];
  auto xi = x.impl();
  std::vector<double> out(static_cast<std::size_t>(n * c));
  for (std::int64_t k = 0; k < n * c; ++k) {
    double s = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) s += xi->data[k * plane + i];
    out[k] = s / static_cast<double>(plane);
  }
  return make_result("global_avg_pool", Shape{n, c}, x.dtype(), std::move(out), {x},
                     [xi, n, c, plane](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto& g = xi->ensure_grad();
                       const double inv = 1.0 / static_cast<double>(plane);
                       for (std::int64_t k = 0; k < n * c; ++k)
                         for (std::int64_t i = 0; i < plane; ++i) g[k * plane + i] += o.grad[k] * inv;
                     });
}

Tensor avg_pool(const Tensor& x, int kernel, int stride) {
  require_rank("avg_pool", x, 4);
  if (kernel < 1) throw ArgumentError("avg_pool: kernel must be >= 1");
  const std::int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::int64_t oh = conv_out_extent(h, kernel, stride, 0);
  const std::int64_t ow = conv_out_extent(w, kernel, stride, 0);
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  auto xi = x.impl();
  std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
  for (std::int64_t k = 0; k < n * c; ++k)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int i = 0; i < kernel; ++i)
          for (int j = 0; j < kernel; ++j)
            s += xi->data[(k * h + oy * stride + i) * w + ox * stride + j];
        out[(k * oh + oy) * ow + ox] = s * inv;
      }
  return make_result("avg_pool", Shape{n, c, oh, ow}, x.dtype(), std::move(out), {x},
                     [xi, n, c, h, w, oh, ow, kernel, stride, inv](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto& g = xi->ensure_grad();
                       for (std::int64_t k = 0; k < n * c; ++k)
                         for (std::int64_t oy = 0; oy < oh; ++oy)
                           for (std::int64_t ox = 0; ox < ow; ++ox) {
                             const double gv = o.grad[(k * oh + oy) * ow + ox] * inv;
                             for (int i = 0; i < kernel; ++i)
                               for (int j = 0; j < kernel; ++j)
                                 g[(k * h + oy * stride + i) * w + ox * stride + j] += gv;
                           }
                     });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor relu6(const Tensor& x) {
  return unary(
      "relu6", x, [](double v) { return std::clamp(v, 0.0, 6.0); },
      [](double v, double) { return (v > 0.0 && v < 6.0) ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor h_sigmoid(const Tensor& x) {
  return unary(
      "h_sigmoid", x, [](double v) { return std::clamp(v + 3.0, 0.0, 6.0) / 6.0; },
      [](double v, double) { return (v > -3.0 && v < 3.0) ? 1.0 / 6.0 : 0.0; });
}

Tensor h_swish(const Tensor& x) {
  return unary(
      "h_swish", x, [](double v) { return v * std::clamp(v + 3.0, 0.0, 6.0) / 6.0; },
      [](double v, double) {
        if (v <= -3.0) return 0.0;
        if (v >= 3.0) return 1.0;
        return (2.0 * v + 3.0) / 6.0;
      });
}

Tensor softmax(const Tensor& x) {
  require_defined("softmax", x);
  const std::int64_t k = x.shape().dims().back();
  const std::int64_t rows = x.numel() / k;
  auto xi = x.impl();
  std::vector<double> out(xi->data.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = xi->data.data() + r * k;
    double* y = out.data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) z += (y[i] = std::exp(in[i] - mx));
    for (std::int64_t i = 0; i < k; ++i) y[i] /= z;
  }
  return make_result("softmax", x.shape(), x.dtype(), std::move(out), {x},
                     [xi, rows, k](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto& g = xi->ensure_grad();
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const double* y = o.data.data() + r * k;
                         const double* gy = o.grad.data() + r * k;
                         double dot = 0.0;
                         for (std::int64_t i = 0; i < k; ++i) dot += y[i] * gy[i];
                         for (std::int64_t i = 0; i < k; ++i) g[r * k + i] += y[i] * (gy[i] - dot);
                       }
                     });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode) {
  require_rank("batchnorm2d", x, 4);
  require_rank("batchnorm2d", gamma, 1);
  require_rank("batchnorm2d", beta, 1);
  const std::int64_t n = x.shape()[0], c = x.shape()[1];
  const std::int64_t plane = x.shape()[2] * x.shape()[3];
  if (gamma.shape()[0] != c || beta.shape()[0] != c ||
      static_cast<std::int64_t>(state.running_mean.size()) != c ||
      static_cast<std::int64_t>(state.running_var.size()) != c) {
    throw ShapeError("batchnorm2d: input " + x.shape().str() + " vs affine " +
                     gamma.shape().str() + " / " + beta.shape().str());
  }
  const DType dtype = common_dtype("batchnorm2d", {x, gamma, beta});
  const std::int64_t m = n * plane;
  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();

  std::vector<double> mu(c), inv_std(c);
  if (mode == Mode::Train) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t i = 0; i < plane; ++i) s += xi->data[(r * c + ch) * plane + i];
      const double mean_v = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = xi->data[(r * c + ch) * plane + i] - mean_v;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(m);
      mu[ch] = mean_v;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean_v;
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  std::vector<double> xhat(xi->data.size()), out(xi->data.size());
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < plane; ++i) {
        const std::int64_t idx = (r * c + ch) * plane + i;
        xhat[idx] = (xi->data[idx] - mu[ch]) * inv_std[ch];
        out[idx] = gi->data[ch] * xhat[idx] + bi->data[ch];
      }

  const bool train = mode == Mode::Train;
  return make_result(
      "batchnorm2d", x.shape(), dtype, std::move(out), {x, gamma, beta},
      [xi, gi, bi, n, c, plane, m, train, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](const TensorImpl& o) {
        const auto& go = o.grad;
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::int64_t r = 0; r < n; ++r)
          for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < plane; ++i) {
              const std::int64_t idx = (r * c + ch) * plane + i;
              sum_g[ch] += go[idx];
              sum_gx[ch] += go[idx] * xhat[idx];
            }
        if (bi->requires_grad) {
          auto& g = bi->ensure_grad();
          for (std::int64_t ch = 0; ch < c; ++ch) g[ch] += sum_g[ch];
        }
        if (gi->requires_grad) {
          auto& g = gi->ensure_grad();
          for (std::int64_t ch = 0; ch < c; ++ch) g[ch] += sum_gx[ch];
        }
        if (!xi->requires_grad) return;
        auto& gx = xi->ensure_grad();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::int64_t r = 0; r < n; ++r)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double k = gi->data[ch] * inv_std[ch];
            for (std::int64_t i = 0; i < plane; ++i) {
              const std::int64_t idx = (r * c + ch) * plane + i;
              if (train) {
                gx[idx] += k * (go[idx] - inv_m * sum_g[ch] - xhat[idx] * inv_m * sum_gx[ch]);
              } else {
                gx[idx] += k * go[idx];
              }
            }
          }
      });
}

Tensor mse_sum(const Tensor& pred, const Tensor& target) {
  require_same_shape("mse_sum", pred, target);
  const Tensor d = sub(pred, target);
  return sum(mul(d, d));
}

Tensor mse_mean(const Tensor& pred, const Tensor& target) {
  require_same_shape("mse_mean", pred, target);
  return scale(mse_sum(pred, target), 1.0 / static_cast<double>(pred.numel()));
}

Tensor mae_mean(const Tensor& pred, const Tensor& target) {
  require_same_shape("mae_mean", pred, target);
  return mean(abs(sub(pred, target)));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> classes) {
  require_defined("cross_entropy", logits);
  const auto rank = logits.shape().rank();
  if (rank != 1 && rank != 2) {
    throw ShapeError("cross_entropy: logits must be [k] or [N,k], got " + logits.shape().str());
  }
  const std::int64_t k = logits.shape().dims().back();
  const std::int64_t rows = rank == 1 ? 1 : logits.shape()[0];
  if (static_cast<std::int64_t>(classes.size()) != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(classes.size()) + " labels for logits " +
                     logits.shape().str());
  }
  for (int cls : classes) {
    if (cls < 0 || cls >= k) {
      throw ArgumentError("cross_entropy: class index " + std::to_string(cls) +
                          " out of range [0," + std::to_string(k) + ")");
    }
  }
  auto li = logits.impl();
  std::vector<int> labels(classes.begin(), classes.end());
  std::vector<double> probs(li->data.size());
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = li->data.data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) z += std::exp(in[i] - mx);
    const double lse = mx + std::log(z);
    for (std::int64_t i = 0; i < k; ++i) probs[r * k + i] = std::exp(in[i] - lse);
    total += lse - in[labels[r]];
  }
  const double loss = total / static_cast<double>(rows);
  return make_result("cross_entropy", Shape{1}, logits.dtype(), {loss}, {logits},
                     [li, rows, k, labels = std::move(labels),
                      probs = std::move(probs)](const TensorImpl& o) {
                       if (!li->requires_grad) return;
                       auto& g = li->ensure_grad();
                       const double f = o.grad[0] / static_cast<double>(rows);
                       for (std::int64_t r = 0; r < rows; ++r)
                         for (std::int64_t i = 0; i < k; ++i) {
                           const double onehot = i == labels[r] ? 1.0 : 0.0;
                           g[r * k + i] += f * (probs[r * k + i] - onehot);
                         }
                     });
}

} // namespace mushroom::ops
