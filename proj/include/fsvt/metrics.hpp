#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "fsvt/image_io.hpp"
#include "fsvt/warp.hpp"

namespace fsvt {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;  // constants for a unit dynamic range
};

namespace ssim_detail {

inline std::vector<double> gaussian_1d(int n, double sigma) {
  std::vector<double> g(n);
  double s = 0;
  for (int i = 0; i < n; ++i) {
    const double d = i - (n - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Separable 'valid' filtering of an h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < n; ++k) s += g[k] * img[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < n; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace ssim_detail

// Mean SSIM over 'valid' Gaussian windows, averaged over channels. Inputs are
// [-1, 1] images and are mapped to [0, 1] first.
inline double ssim(const Image& a, const Image& b, const SsimParams& prm = {}) {
  require(a.shape() == b.shape() && a.rank() == 3, "shape_mismatch",
          "ssim: " + a.shape().str() + " vs " + b.shape().str());
  const int H = a.height(), W = a.width();
  require(H >= prm.window && W >= prm.window, "shape_mismatch", "ssim: image smaller than the window");
  const auto g = ssim_detail::gaussian_1d(prm.window, prm.sigma);
  const double c1 = prm.k1 * prm.k1, c2 = prm.k2 * prm.k2;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = (a[c * plane + i] + 1.0) / 2.0;
      y[i] = (b[c * plane + i] + 1.0) / 2.0;
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = ssim_detail::filter_valid(x, H, W, g), my = ssim_detail::filter_valid(y, H, W, g);
    const auto sxx = ssim_detail::filter_valid(xx, H, W, g), syy = ssim_detail::filter_valid(yy, H, W, g);
    const auto sxy = ssim_detail::filter_valid(xy, H, W, g);
    double s = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      s += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / mx.size();
  }
  return total / a.channels();
}

// Mean end-point error, optionally restricted to mask != 0.
inline double epe(const FlowField<float>& pred, const FlowField<float>& gt,
                  const std::optional<Tensor<float>>& mask = std::nullopt) {
  require(pred.height() == gt.height() && pred.width() == gt.width(), "shape_mismatch", "epe: flow sizes differ");
  if (mask)
    require(mask->rank() == 3 && mask->channels() == 1 && mask->height() == gt.height() && mask->width() == gt.width(),
            "shape_mismatch", "epe: mask does not match the flow");
  double s = 0;
  std::size_t n = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (mask && mask->at(0, y, x) == 0) continue;
      s += std::hypot(static_cast<double>(pred.dx(y, x)) - gt.dx(y, x), static_cast<double>(pred.dy(y, x)) - gt.dy(y, x));
      ++n;
    }
  require(n > 0, "empty_mask", "epe: mask selects no pixels");
  return s / n;
}

}  // namespace fsvt
