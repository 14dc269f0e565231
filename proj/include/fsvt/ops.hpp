#pragma once

// Differentiable tensor operations on a Tape. Rasters are (C, H, W); vectors
// are rank 1. Every op records a backward closure only when an input needs it.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fsvt/autograd.hpp"

namespace fsvt {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Per-thread scratch that only grows, so column buffers skip the zero fill.
template <class T>
T* scratch(std::size_t n, int slot) {
  thread_local AlignedVector<T> buf[2];
  if (buf[slot].size() < n) buf[slot].resize(n);
  return buf[slot].data();
}

// Each (c, ky, kx) row of the column matrix is the input plane shifted by
// (ky - pad, kx - pad). Inside rows [y0, y1) the shift is one contiguous copy;
// the columns that wrapped to a neighbouring image row are then zeroed.
template <class T>
void im2col(const Tensor<T>& x, int k, T* out) {
  const int C = x.channels(), H = x.height(), W = x.width(), pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = out + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        const T* src = x.data() + c * plane;
        const int x0 = std::max(0, pad - kx), x1 = std::min(W, W + pad - kx);
        const int y0 = std::max(0, pad - ky), y1 = std::min(H, H + pad - ky);
        if (y1 <= y0 || x1 <= x0) {
          std::fill(row, row + plane, T(0));
          continue;
        }
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(ky - pad) * W + (kx - pad);
        const std::size_t begin = static_cast<std::size_t>(y0) * W + x0, end = static_cast<std::size_t>(y1 - 1) * W + x1;
        std::fill(row, row + begin, T(0));
        std::copy(src + begin + off, src + end + off, row + begin);
        std::fill(row + end, row + plane, T(0));
        for (int y = y0; y < y1; ++y) {
          T* r = row + static_cast<std::size_t>(y) * W;
          for (int xx = 0; xx < x0; ++xx) r[xx] = T(0);
          for (int xx = x1; xx < W; ++xx) r[xx] = T(0);
        }
      }
}

// Adjoint of im2col. Consumes `col`: its wrapped columns are zeroed so each
// row can be added back as one contiguous block.
template <class T>
void col2im_add(T* col, int k, Tensor<T>& dx) {
  const int C = dx.channels(), H = dx.height(), W = dx.width(), pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        T* dst = dx.data() + c * plane;
        const int x0 = std::max(0, pad - kx), x1 = std::min(W, W + pad - kx);
        const int y0 = std::max(0, pad - ky), y1 = std::min(H, H + pad - ky);
        if (y1 <= y0 || x1 <= x0) continue;
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(ky - pad) * W + (kx - pad);
        const std::size_t begin = static_cast<std::size_t>(y0) * W + x0, end = static_cast<std::size_t>(y1 - 1) * W + x1;
        for (int y = y0; y < y1; ++y) {
          T* r = row + static_cast<std::size_t>(y) * W;
          for (int xx = 0; xx < x0; ++xx) r[xx] = T(0);
          for (int xx = x1; xx < W; ++xx) r[xx] = T(0);
        }
        T* d = dst + (static_cast<std::ptrdiff_t>(begin) + off);
        const T* r = row + begin;
        for (std::size_t i = 0; i < end - begin; ++i) d[i] += r[i];
      }
}

}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), any_requires_grad<T>(a, b), [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), any_requires_grad<T>(a, b), [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      Tensor<T> ng = g;
      ng *= T(-1);
      t.accumulate(ib, ng);
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), any_requires_grad<T>(a, b), [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>&av = t.value(ia), &bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<T> ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Tensor<T> gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
      t.accumulate(ib, gb);
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T k) {
  Tensor<T> out = a.value();
  out *= k;
  const int ia = a.id();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, k](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    ga *= k;
    t.accumulate(ia, ga);
  });
}

// Multiplies channel c of a raster (or element c of a vector) by factors[c].
template <class T>
Var<T> scale_channels(Var<T> a, std::vector<T> factors) {
  const Tensor<T>& av = a.value();
  require(static_cast<int>(factors.size()) == av.dim(0), "shape_mismatch", "scale_channels: factor count");
  const std::size_t plane = av.size() / av.dim(0);
  Tensor<T> out = av;
  for (int c = 0; c < av.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] *= factors[c];
  const int ia = a.id();
  return a.tape()->push(std::move(out), a.requires_grad(),
                        [ia, factors = std::move(factors), plane](Tape<T>& t, const Tensor<T>& g) {
                          Tensor<T> ga = g;
                          for (std::size_t c = 0; c < factors.size(); ++c)
                            for (std::size_t i = 0; i < plane; ++i) ga[c * plane + i] *= factors[c];
                          t.accumulate(ia, ga);
                        });
}

template <class T>
Var<T> leaky_relu(Var<T> a, T slope = T(0.2)) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = v > T(0) ? v : v * slope;
  const int ia = a.id();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, slope](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    Tensor<T> ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (!(av[i] > T(0))) ga[i] *= slope;
    t.accumulate(ia, ga);
  });
}

template <class T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  const int ia = a.id();
  const int io = static_cast<int>(a.tape()->size());
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, io](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(io);
    Tensor<T> ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= T(1) - y[i] * y[i];
    t.accumulate(ia, ga);
  });
}

// Reshape to a vector; gradient passes through unchanged.
template <class T>
Var<T> flatten(Var<T> a) {
  Tensor<T> out = a.value();
  out.reshape(Shape{static_cast<int>(out.size())});
  const int ia = a.id();
  const Shape orig = a.shape();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, orig](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    ga.reshape(orig);
    t.accumulate(ia, ga);
  });
}

// Concatenation along the leading dimension (channels for rasters).
template <class T>
Var<T> concat(Var<T> a, Var<T> b) {
  const Tensor<T>&av = a.value(), &bv = b.value();
  require(av.rank() == bv.rank(), "shape_mismatch", "concat: rank mismatch");
  for (int i = 1; i < av.rank(); ++i)
    require(av.dim(i) == bv.dim(i), "shape_mismatch", "concat: " + av.shape().str() + " vs " + bv.shape().str());
  Shape s = av.shape();
  s[0] = av.dim(0) + bv.dim(0);
  Tensor<T> out(s);
  std::copy(av.values().begin(), av.values().end(), out.data());
  std::copy(bv.values().begin(), bv.values().end(), out.data() + av.size());
  const int ia = a.id(), ib = b.id();
  const std::size_t na = av.size();
  const Shape sa = av.shape(), sb = bv.shape();
  return a.tape()->push(std::move(out), any_requires_grad<T>(a, b), [=](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) {
      Tensor<T> ga(sa);
      std::copy(g.data(), g.data() + na, ga.data());
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Tensor<T> gb(sb);
      std::copy(g.data() + na, g.data() + g.size(), gb.data());
      t.accumulate(ib, gb);
    }
  });
}

// 2-D convolution, stride 1, zero "same" padding, odd square kernel.
// x: (Cin, H, W); w: (Cout, Cin, k, k); bias: (Cout) or none.
template <class T>
Var<T> conv2d_impl(Var<T> x, Var<T> w, std::optional<Var<T>> bias) {
  const Tensor<T>&xv = x.value(), &wv = w.value();
  require(xv.rank() == 3 && wv.rank() == 4, "shape_mismatch", "conv2d: expects (C,H,W) input and (O,I,k,k) kernel");
  require(wv.dim(1) == xv.channels(), "shape_mismatch",
          "conv2d: kernel expects " + std::to_string(wv.dim(1)) + " input channels, got " +
              std::to_string(xv.channels()));
  require(wv.dim(2) == wv.dim(3) && wv.dim(2) % 2 == 1, "invalid_argument", "conv2d: kernel must be odd and square");
  const int Cout = wv.dim(0), Cin = xv.channels(), H = xv.height(), W = xv.width(), k = wv.dim(2);
  const int K = Cin * k * k, HW = H * W;
  if (bias) require(bias->value().size() == static_cast<std::size_t>(Cout), "shape_mismatch", "conv2d: bias size");

  // k > 1 goes through an im2col matrix; backward rebuilds it rather than
  // keeping one per layer alive on the tape.
  const T* colp = xv.data();
  if (k != 1) {
    T* col = detail::scratch<T>(static_cast<std::size_t>(K) * HW, 0);
    detail::im2col(xv, k, col);
    colp = col;
  }
  Tensor<T> out(Shape{Cout, H, W});
  {
    detail::ConstMatMap<T> Wm(wv.data(), Cout, K);
    detail::ConstMatMap<T> Cm(colp, K, HW);
    detail::MatMap<T> Om(out.data(), Cout, HW);
    Om.noalias() = Wm * Cm;
  }
  if (bias) {
    const Tensor<T>& bv = bias->value();
    for (int o = 0; o < Cout; ++o) {
      T* p = out.data() + static_cast<std::size_t>(o) * HW;
      for (int i = 0; i < HW; ++i) p[i] += bv[o];
    }
  }
  const bool rg = x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
  if (!rg) return x.tape()->push(std::move(out), false, nullptr);
  const int ix = x.id(), iw = w.id(), ib = bias ? bias->id() : -1;
  return x.tape()->push(std::move(out), true, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xval = t.value(ix);
    const Tensor<T>& wval = t.value(iw);
    detail::ConstMatMap<T> G(g.data(), Cout, HW);
    if (t.requires_grad(iw)) {
      const T* cm = xval.data();
      if (k != 1) {
        T* col = detail::scratch<T>(static_cast<std::size_t>(K) * HW, 0);
        detail::im2col(xval, k, col);
        cm = col;
      }
      Tensor<T> gw(wval.shape());
      detail::MatMap<T>(gw.data(), Cout, K).noalias() = G * detail::ConstMatMap<T>(cm, K, HW).transpose();
      t.accumulate(iw, gw);
    }
    if (ib >= 0 && t.requires_grad(ib)) {
      Tensor<T> gb(Shape{Cout});
      for (int o = 0; o < Cout; ++o) gb[o] = G.row(o).sum();
      t.accumulate(ib, gb);
    }
    if (t.requires_grad(ix)) {
      if (k == 1) {
        Tensor<T> gx(xval.shape());
        detail::MatMap<T>(gx.data(), K, HW).noalias() = detail::ConstMatMap<T>(wval.data(), Cout, K).transpose() * G;
        t.accumulate(ix, gx);
      } else {
        T* gcol = detail::scratch<T>(static_cast<std::size_t>(K) * HW, 1);
        detail::MatMap<T>(gcol, K, HW).noalias() = detail::ConstMatMap<T>(wval.data(), Cout, K).transpose() * G;
        Tensor<T>& gx = t.grad_buffer(ix);
        detail::col2im_add(gcol, k, gx);
      }
    }
  });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w) {
  return conv2d_impl<T>(x, w, std::nullopt);
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias) {
  return conv2d_impl<T>(x, w, bias);
}

// 2x2 average pooling; odd trailing rows/columns are dropped (floor).
template <class T>
Var<T> avg_pool2(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const int C = xv.channels(), H = xv.height(), W = xv.width(), h = H / 2, w = W / 2;
  require(h > 0 && w > 0, "shape_mismatch", "avg_pool2: input " + xv.shape().str() + " too small");
  Tensor<T> out(Shape{C, h, w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out.at(c, y, xx) = T(0.25) * (xv.at(c, 2 * y, 2 * xx) + xv.at(c, 2 * y, 2 * xx + 1) +
                                      xv.at(c, 2 * y + 1, 2 * xx) + xv.at(c, 2 * y + 1, 2 * xx + 1));
  const int ix = x.id();
  const Shape in_shape = xv.shape();
  return x.tape()->push(std::move(out), x.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(in_shape);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const T v = T(0.25) * g.at(c, y, xx);
          gx.at(c, 2 * y, 2 * xx) += v;
          gx.at(c, 2 * y, 2 * xx + 1) += v;
          gx.at(c, 2 * y + 1, 2 * xx) += v;
          gx.at(c, 2 * y + 1, 2 * xx + 1) += v;
        }
    t.accumulate(ix, gx);
  });
}

namespace detail {

// Source index pair and weight for align-corners=false linear resampling.
struct LerpTap {
  int i0, i1;
  double a;
};

inline std::vector<LerpTap> lerp_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double s = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * s - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace detail

// Bilinear resize of a raster to (H, W), align-corners=false.
template <class T>
Var<T> resize_bilinear(Var<T> x, int H, int W) {
  const Tensor<T>& xv = x.value();
  const int C = xv.channels(), h = xv.height(), w = xv.width();
  const auto ty = detail::lerp_taps(h, H);
  const auto tx = detail::lerp_taps(w, W);
  Tensor<T> out(Shape{C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      const auto& a = ty[y];
      for (int xx = 0; xx < W; ++xx) {
        const auto& b = tx[xx];
        const T ay = static_cast<T>(a.a), ax = static_cast<T>(b.a);
        out.at(c, y, xx) = (1 - ay) * ((1 - ax) * xv.at(c, a.i0, b.i0) + ax * xv.at(c, a.i0, b.i1)) +
                           ay * ((1 - ax) * xv.at(c, a.i1, b.i0) + ax * xv.at(c, a.i1, b.i1));
      }
    }
  const int ix = x.id();
  const Shape in_shape = xv.shape();
  return x.tape()->push(std::move(out), x.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(in_shape);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y) {
        const auto& a = ty[y];
        for (int xx = 0; xx < W; ++xx) {
          const auto& b = tx[xx];
          const T ay = static_cast<T>(a.a), ax = static_cast<T>(b.a), v = g.at(c, y, xx);
          gx.at(c, a.i0, b.i0) += (1 - ay) * (1 - ax) * v;
          gx.at(c, a.i0, b.i1) += (1 - ay) * ax * v;
          gx.at(c, a.i1, b.i0) += ay * (1 - ax) * v;
          gx.at(c, a.i1, b.i1) += ay * ax * v;
        }
      }
    t.accumulate(ix, gx);
  });
}

// Channel-wise spatial mean: (C, H, W) -> (C).
template <class T>
Var<T> global_avg_pool(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const int C = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  Tensor<T> out(Shape{C});
  for (int c = 0; c < C; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += xv[c * plane + i];
    out[c] = static_cast<T>(s / plane);
  }
  const int ix = x.id();
  const Shape in_shape = xv.shape();
  return x.tape()->push(std::move(out), x.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(in_shape);
    for (int c = 0; c < C; ++c) {
      const T v = g[c] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] = v;
    }
    t.accumulate(ix, gx);
  });
}

// y = W x + b; x: (in), W: (out, in), b: (out).
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>&xv = x.value(), &wv = w.value(), &bv = b.value();
  require(xv.rank() == 1 && wv.rank() == 2 && wv.dim(1) == static_cast<int>(xv.size()), "shape_mismatch",
          "linear: weight " + wv.shape().str() + " vs input " + xv.shape().str());
  require(bv.size() == static_cast<std::size_t>(wv.dim(0)), "shape_mismatch", "linear: bias size");
  const int O = wv.dim(0), I = wv.dim(1);
  Tensor<T> out = bv;
  for (int o = 0; o < O; ++o) {
    T s = 0;
    const T* row = wv.data() + static_cast<std::size_t>(o) * I;
    for (int i = 0; i < I; ++i) s += row[i] * xv[i];
    out[o] += s;
  }
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->push(std::move(out), any_requires_grad<T>(x, w, b), [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>&xval = t.value(ix), &wval = t.value(iw);
    if (t.requires_grad(iw)) {
      Tensor<T> gw(wval.shape());
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < I; ++i) gw[static_cast<std::size_t>(o) * I + i] = g[o] * xval[i];
      t.accumulate(iw, gw);
    }
    t.accumulate(ib, g);
    if (t.requires_grad(ix)) {
      Tensor<T> gx(xval.shape());
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < I; ++i) gx[i] += g[o] * wval[static_cast<std::size_t>(o) * I + i];
      t.accumulate(ix, gx);
    }
  });
}

// mean(|a|) over all elements -> scalar of shape (1).
template <class T>
Var<T> mean_abs(Var<T> a) {
  const Tensor<T>& av = a.value();
  require(av.size() > 0, "shape_mismatch", "mean_abs: empty tensor");
  double s = 0;
  for (T v : av.values()) s += std::abs(v);
  Tensor<T> out(Shape{1}, static_cast<T>(s / av.size()));
  const int ia = a.id();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    const T k = g[0] / static_cast<T>(av.size());
    Tensor<T> ga(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = av[i] > 0 ? k : (av[i] < 0 ? -k : T(0));
    t.accumulate(ia, ga);
  });
}

// mean over all elements -> scalar of shape (1).
template <class T>
Var<T> mean(Var<T> a) {
  const Tensor<T>& av = a.value();
  double s = 0;
  for (T v : av.values()) s += v;
  Tensor<T> out(Shape{1}, static_cast<T>(s / av.size()));
  const int ia = a.id();
  const Shape sh = av.shape();
  const std::size_t n = av.size();
  return a.tape()->push(std::move(out), a.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, Tensor<T>(sh, g[0] / static_cast<T>(n)));
  });
}

}  // namespace fsvt
