#pragma once

// Warping primitives shared by every network: backward bilinear sampling,
// flow upsampling, style-modulated convolution and Charbonnier smoothness.
//
// Flow convention: a flow stored at target pixel (y, x) holds the offset
// (dx, dy) of the source location to read, in pixels of the flow's own grid.
// Pixel centres sit at integer coordinates.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "fsvt/ops.hpp"

namespace fsvt {

// Dense displacement field, channel 0 = dx, channel 1 = dy.
template <class T = float>
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width) : data_(Shape{2, height, width}) {}
  explicit FlowField(Tensor<T> t) : data_(std::move(t)) {
    require(data_.rank() == 3 && data_.channels() == 2, "shape_mismatch",
            "FlowField needs a (2,H,W) tensor, got " + data_.shape().str());
  }

  static FlowField constant(int height, int width, T dx, T dy) {
    FlowField f(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        f.dx(y, x) = dx;
        f.dy(y, x) = dy;
      }
    return f;
  }

  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  T& dx(int y, int x) { return data_.at(0, y, x); }
  T& dy(int y, int x) { return data_.at(1, y, x); }
  T dx(int y, int x) const { return data_.at(0, y, x); }
  T dy(int y, int x) const { return data_.at(1, y, x); }

  const Tensor<T>& tensor() const { return data_; }
  Tensor<T>& tensor() { return data_; }

  // Finite and within |dx| <= 2W, |dy| <= 2H.
  bool sane() const {
    for (int y = 0; y < height(); ++y)
      for (int x = 0; x < width(); ++x) {
        const T a = dx(y, x), b = dy(y, x);
        if (!std::isfinite(a) || !std::isfinite(b)) return false;
        if (std::abs(a) > 2 * width() || std::abs(b) > 2 * height()) return false;
      }
    return true;
  }

  bool operator==(const FlowField& o) const { return data_ == o.data_; }

 private:
  Tensor<T> data_;
};

namespace detail {

// Clamped bilinear read position for one coordinate axis.
struct AxisTap {
  int i0, i1;
  double a;
  bool clamped;
};

inline AxisTap axis_tap(double p, int n) {
  AxisTap t{};
  t.clamped = false;
  if (p <= 0) {
    t.clamped = p < 0;
    p = 0;
  } else if (p >= n - 1) {
    t.clamped = p > n - 1;
    p = n - 1;
  }
  t.i0 = static_cast<int>(std::floor(p));
  t.i1 = std::min(t.i0 + 1, n - 1);
  t.a = p - t.i0;
  return t;
}

}  // namespace detail

// out(c, y, x) = src bilinearly read at (x + dx, y + dy), coordinates clamped to
// the border. Differentiable in both src and flow; the flow gradient is zero
// along an axis whose coordinate was clamped.
template <class T>
Var<T> bilinear_sample(Var<T> src, Var<T> flow) {
  const Tensor<T>&sv = src.value(), &fv = flow.value();
  require(sv.rank() == 3 && fv.rank() == 3 && fv.channels() == 2, "shape_mismatch",
          "bilinear_sample: expects (C,h,w) source and (2,h,w) flow");
  require(sv.height() == fv.height() && sv.width() == fv.width(), "shape_mismatch",
          "bilinear_sample: source " + sv.shape().str() + " vs flow " + fv.shape().str());
  const int C = sv.channels(), H = sv.height(), W = sv.width();
  Tensor<T> out(sv.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto tx = detail::axis_tap(x + static_cast<double>(fv.at(0, y, x)), W);
      const auto ty = detail::axis_tap(y + static_cast<double>(fv.at(1, y, x)), H);
      const T ax = static_cast<T>(tx.a), ay = static_cast<T>(ty.a);
      for (int c = 0; c < C; ++c)
        out.at(c, y, x) = (1 - ay) * ((1 - ax) * sv.at(c, ty.i0, tx.i0) + ax * sv.at(c, ty.i0, tx.i1)) +
                          ay * ((1 - ax) * sv.at(c, ty.i1, tx.i0) + ax * sv.at(c, ty.i1, tx.i1));
    }
  const int is = src.id(), ifl = flow.id();
  return src.tape()->push(std::move(out), any_requires_grad<T>(src, flow), [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>&s = t.value(is), &f = t.value(ifl);
    const bool want_src = t.requires_grad(is), want_flow = t.requires_grad(ifl);
    Tensor<T> gs = want_src ? Tensor<T>(s.shape()) : Tensor<T>();
    Tensor<T> gf = want_flow ? Tensor<T>(f.shape()) : Tensor<T>();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const auto tx = detail::axis_tap(x + static_cast<double>(f.at(0, y, x)), W);
        const auto ty = detail::axis_tap(y + static_cast<double>(f.at(1, y, x)), H);
        const T ax = static_cast<T>(tx.a), ay = static_cast<T>(ty.a);
        T gdx = 0, gdy = 0;
        for (int c = 0; c < C; ++c) {
          const T go = g.at(c, y, x);
          if (go == T(0)) continue;
          if (want_src) {
            gs.at(c, ty.i0, tx.i0) += (1 - ay) * (1 - ax) * go;
            gs.at(c, ty.i0, tx.i1) += (1 - ay) * ax * go;
            gs.at(c, ty.i1, tx.i0) += ay * (1 - ax) * go;
            gs.at(c, ty.i1, tx.i1) += ay * ax * go;
          }
          if (want_flow) {
            const T s00 = s.at(c, ty.i0, tx.i0), s01 = s.at(c, ty.i0, tx.i1);
            const T s10 = s.at(c, ty.i1, tx.i0), s11 = s.at(c, ty.i1, tx.i1);
            gdx += go * ((1 - ay) * (s01 - s00) + ay * (s11 - s10));
            gdy += go * ((1 - ax) * (s10 - s00) + ax * (s11 - s01));
          }
        }
        if (want_flow) {
          gf.at(0, y, x) = tx.clamped ? T(0) : gdx;
          gf.at(1, y, x) = ty.clamped ? T(0) : gdy;
        }
      }
    if (want_src) t.accumulate(is, gs);
    if (want_flow) t.accumulate(ifl, gf);
  });
}

// Resamples a flow to (H, W) and rescales its displacements into the new
// grid's pixel units (dx by W/w, dy by H/h).
template <class T>
Var<T> resize_flow(Var<T> flow, int H, int W) {
  const Tensor<T>& fv = flow.value();
  require(fv.rank() == 3 && fv.channels() == 2, "shape_mismatch", "resize_flow: expects a (2,h,w) flow");
  const T sx = static_cast<T>(W) / fv.width(), sy = static_cast<T>(H) / fv.height();
  return scale_channels(resize_bilinear(flow, H, W), std::vector<T>{sx, sy});
}

// Operator U: 2x bilinear upsampling with displacements doubled.
template <class T>
Var<T> upsample_flow(Var<T> flow) {
  return resize_flow(flow, 2 * flow.value().height(), 2 * flow.value().width());
}

template <class T>
Var<T> zero_flow(Tape<T>& tape, int h, int w) {
  return tape.constant(Tensor<T>(Shape{2, h, w}));
}

// w'(o, i, ky, kx) = w(o, i, ky, kx) * m(i).
template <class T>
Var<T> modulate_weight(Var<T> w, Var<T> m) {
  const Tensor<T>&wv = w.value(), &mv = m.value();
  require(wv.rank() == 4 && mv.rank() == 1 && wv.dim(1) == static_cast<int>(mv.size()), "shape_mismatch",
          "modulate_weight: kernel " + wv.shape().str() + " vs modulation " + mv.shape().str());
  const int O = wv.dim(0), I = wv.dim(1), kk = wv.dim(2) * wv.dim(3);
  Tensor<T> out = wv;
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < I; ++i) {
      T* p = out.data() + (static_cast<std::size_t>(o) * I + i) * kk;
      for (int j = 0; j < kk; ++j) p[j] *= mv[i];
    }
  const int iw = w.id(), im = m.id();
  return w.tape()->push(std::move(out), any_requires_grad<T>(w, m), [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>&wval = t.value(iw), &mval = t.value(im);
    if (t.requires_grad(iw)) {
      Tensor<T> gw = g;
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < I; ++i) {
          T* p = gw.data() + (static_cast<std::size_t>(o) * I + i) * kk;
          for (int j = 0; j < kk; ++j) p[j] *= mval[i];
        }
      t.accumulate(iw, gw);
    }
    if (t.requires_grad(im)) {
      Tensor<T> gm(mval.shape());
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < I; ++i) {
          const std::size_t base = (static_cast<std::size_t>(o) * I + i) * kk;
          T s = 0;
          for (int j = 0; j < kk; ++j) s += g[base + j] * wval[base + j];
          gm[i] += s;
        }
      t.accumulate(im, gm);
    }
  });
}

// w''(o, ...) = w'(o, ...) / sqrt(sum_{i,ky,kx} w'(o, i, ky, kx)^2 + eps).
template <class T>
Var<T> demodulate(Var<T> w, T eps) {
  const Tensor<T>& wv = w.value();
  const int O = wv.dim(0);
  const std::size_t per = wv.size() / O;
  std::vector<T> inv(O);
  Tensor<T> out = wv;
  for (int o = 0; o < O; ++o) {
    double ss = 0;
    for (std::size_t j = 0; j < per; ++j) ss += static_cast<double>(wv[o * per + j]) * wv[o * per + j];
    inv[o] = static_cast<T>(1.0 / std::sqrt(ss + eps));
    for (std::size_t j = 0; j < per; ++j) out[o * per + j] *= inv[o];
  }
  const int iw = w.id();
  return w.tape()->push(std::move(out), w.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& wval = t.value(iw);
    Tensor<T> gw(wval.shape());
    for (int o = 0; o < O; ++o) {
      const T d = inv[o];
      T dot = 0;
      for (std::size_t j = 0; j < per; ++j) dot += g[o * per + j] * wval[o * per + j];
      for (std::size_t j = 0; j < per; ++j) gw[o * per + j] = d * g[o * per + j] - d * d * d * wval[o * per + j] * dot;
    }
    t.accumulate(iw, gw);
  });
}

// Style-modulated convolution weights. The affine map turns a style vector
// into one modulation factor per input channel.
template <class T = float>
struct ModConvParams {
  Parameter<T> kernel;    // (out, in, k, k)
  Parameter<T> affine_w;  // (in, style)
  Parameter<T> affine_b;  // (in)
  Parameter<T> bias;      // (out)
  T eps = T(1e-8);
  bool demodulate = true;

  int out_channels() const { return kernel.value.dim(0); }
  int in_channels() const { return kernel.value.dim(1); }
  int kernel_size() const { return kernel.value.dim(2); }
  int style_dim() const { return affine_w.value.dim(1); }

  template <class Rng>
  static ModConvParams init(int in, int out, int k, int style, Rng& rng, bool demod = true, bool zero = false) {
    require(k % 2 == 1, "invalid_argument", "modulated conv kernel size must be odd");
    ModConvParams p;
    const T std_w = static_cast<T>(std::sqrt(2.0 / (1.04 * in * k * k)));
    p.kernel = Parameter<T>(zero ? Tensor<T>(Shape{out, in, k, k}) : random_normal<T>(Shape{out, in, k, k}, rng, std_w));
    p.affine_w = Parameter<T>(random_normal<T>(Shape{in, style}, rng, static_cast<T>(1.0 / std::sqrt(style))));
    p.affine_b = Parameter<T>(Tensor<T>(Shape{in}, T(1)));
    p.bias = Parameter<T>(Tensor<T>(Shape{out}));
    p.demodulate = demod;
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + "kernel", kernel);
    f(prefix + "affine_w", affine_w);
    f(prefix + "affine_b", affine_b);
    f(prefix + "bias", bias);
  }
};

// Variables of a ModConvParams bound on a tape (trainable or frozen).
template <class T>
struct ModConvVars {
  Var<T> kernel, affine_w, affine_b, bias;
  T eps;
  bool demodulate;
};

template <class T, class Bind>
ModConvVars<T> bind(ModConvParams<T>& p, Bind&& b) {
  return {b(p.kernel), b(p.affine_w), b(p.affine_b), b(p.bias), p.eps, p.demodulate};
}

template <class T>
Var<T> modulated_conv(Var<T> x, Var<T> style, const ModConvVars<T>& p) {
  require(style.value().rank() == 1 && p.affine_w.value().dim(1) == static_cast<int>(style.value().size()),
          "shape_mismatch", "modulated_conv: affine expects style of length " +
                                std::to_string(p.affine_w.value().dim(1)) + ", got " + style.shape().str());
  Var<T> m = linear(style, p.affine_w, p.affine_b);
  Var<T> w = modulate_weight(p.kernel, m);
  if (p.demodulate) w = demodulate(w, p.eps);
  return conv2d(x, w, p.bias);
}

template <class T>
struct CharbonnierParams {
  T eps = T(1e-3);
  T q = T(0.45);
};

// Mean of rho(d) = (d^2 + eps^2)^q over every forward difference of both
// flow channels along x and y. Needs at least one difference.
template <class T>
Var<T> charbonnier_smoothness(Var<T> flow, CharbonnierParams<T> cp = {}) {
  const Tensor<T>& fv = flow.value();
  require(fv.rank() == 3, "shape_mismatch", "charbonnier_smoothness: expects a (C,h,w) flow");
  const int C = fv.channels(), H = fv.height(), W = fv.width();
  const std::size_t count = static_cast<std::size_t>(C) * (H * (W - 1) + (H - 1) * W);
  require(count > 0, "shape_mismatch", "charbonnier_smoothness: flow " + fv.shape().str() + " has no differences");
  const double e2 = static_cast<double>(cp.eps) * cp.eps, q = cp.q;
  double total = 0;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (x + 1 < W) {
          const double d = static_cast<double>(fv.at(c, y, x + 1)) - fv.at(c, y, x);
          total += std::pow(d * d + e2, q);
        }
        if (y + 1 < H) {
          const double d = static_cast<double>(fv.at(c, y + 1, x)) - fv.at(c, y, x);
          total += std::pow(d * d + e2, q);
        }
      }
  Tensor<T> out(Shape{1}, static_cast<T>(total / count));
  const int ifl = flow.id();
  return flow.tape()->push(std::move(out), flow.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& f = t.value(ifl);
    Tensor<T> gf(f.shape());
    const double k = static_cast<double>(g[0]) / count;
    auto drho = [&](double d) { return 2.0 * q * d * std::pow(d * d + e2, q - 1.0); };
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (x + 1 < W) {
            const double r = k * drho(static_cast<double>(f.at(c, y, x + 1)) - f.at(c, y, x));
            gf.at(c, y, x + 1) += static_cast<T>(r);
            gf.at(c, y, x) -= static_cast<T>(r);
          }
          if (y + 1 < H) {
            const double r = k * drho(static_cast<double>(f.at(c, y + 1, x)) - f.at(c, y, x));
            gf.at(c, y + 1, x) += static_cast<T>(r);
            gf.at(c, y, x) -= static_cast<T>(r);
          }
        }
    t.accumulate(ifl, gf);
  });
}

// Non-differentiable convenience: warp a raster with a flow of equal size.
template <class T>
Tensor<T> warp(const Tensor<T>& src, const FlowField<T>& flow) {
  Tape<T> tape(false);
  return bilinear_sample(tape.constant(src), tape.constant(flow.tensor())).value();
}

// FLO1: "FLO1", width u32 LE, height u32 LE, then height*width*(dx, dy) float32 LE.
namespace flo {

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("io", "FLO1: truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline void put_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}
inline float get_f32(std::istream& is) {
  const std::uint32_t u = get_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
}  // namespace detail

inline void write(std::ostream& os, const FlowField<float>& f) {
  os.write("FLO1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(f.width()));
  detail::put_u32(os, static_cast<std::uint32_t>(f.height()));
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      detail::put_f32(os, f.dx(y, x));
      detail::put_f32(os, f.dy(y, x));
    }
}

inline FlowField<float> read(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FLO1", 4) != 0) throw Error("io", "FLO1: bad magic");
  const std::uint32_t w = detail::get_u32(is), h = detail::get_u32(is);
  require(w > 0 && h > 0 && w < (1u << 16) && h < (1u << 16), "io", "FLO1: implausible dimensions");
  FlowField<float> f(static_cast<int>(h), static_cast<int>(w));
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      f.dx(y, x) = detail::get_f32(is);
      f.dy(y, x) = detail::get_f32(is);
    }
  return f;
}

inline void save(const std::string& path, const FlowField<float>& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io", "cannot open " + path + " for writing");
  write(os, f);
  if (!os) throw Error("io", "write failed: " + path);
}

inline FlowField<float> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io", "cannot open " + path);
  return read(is);
}

}  // namespace flo

}  // namespace fsvt
