#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fsvt/image_io.hpp"
#include "fsvt/training.hpp"

namespace fsvt {

// One row of a try-on grid.
struct GridRow {
  Image person, garment, warped, tryon;
};

// Rows of person | garment | warped | try-on, separated by white gutters.
inline Image tryon_grid(const std::vector<GridRow>& rows, int gutter = 2) {
  require(!rows.empty(), "invalid_argument", "tryon_grid needs at least one row");
  const int H = rows[0].person.height(), W = rows[0].person.width();
  const int n = static_cast<int>(rows.size());
  Image grid(Shape{3, n * H + (n + 1) * gutter, 4 * W + 5 * gutter}, 1.0f);
  for (int r = 0; r < n; ++r) {
    const Image* cells[4] = {&rows[r].person, &rows[r].garment, &rows[r].warped, &rows[r].tryon};
    for (int k = 0; k < 4; ++k) {
      const Image& c = *cells[k];
      require(c.rank() == 3 && c.channels() == 3 && c.height() == H && c.width() == W, "shape_mismatch",
              "tryon_grid: cell " + std::to_string(k) + " of row " + std::to_string(r) + " is " + c.shape().str());
      const int oy = gutter + r * (H + gutter), ox = gutter + k * (W + gutter);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) grid.at(ch, oy + y, ox + x) = c.at(ch, y, x);
    }
  }
  return grid;
}

namespace plot_detail {

using Rgb = std::array<std::uint8_t, 3>;

struct Canvas {
  int h, w;
  std::vector<std::uint8_t> px;
  Canvas(int h_, int w_) : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_ * 3, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    for (int k = 0; k < 3; ++k) px[(static_cast<std::size_t>(y) * w + x) * 3 + k] = c[k];
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      set(x0, y0 + 1, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }
};

}  // namespace plot_detail

// Per-epoch means of each loss term on a log10 axis. Colours: total black,
// L_p blue, L_g red, L_R green, L_D orange; a legend swatch per drawn series
// sits in the top-right corner. Horizontal rules mark powers of ten.
inline void plot_loss_curves(const std::string& path, const std::vector<LossRecord>& curve, int height = 360,
                             int width = 640) {
  using plot_detail::Rgb;
  require(!curve.empty(), "invalid_argument", "loss curve is empty");
  require(height >= 64 && width >= 64, "invalid_argument", "plot is too small");

  const int epochs = curve.back().epoch + 1;
  std::vector<std::array<double, 5>> mean(epochs, {0, 0, 0, 0, 0});
  std::vector<int> count(epochs, 0);
  for (const auto& r : curve) {
    require(r.epoch >= 0 && r.epoch < epochs, "invalid_argument", "loss curve epochs out of order");
    const double v[5] = {r.total, r.lp, r.lg, r.lr, r.ld};
    for (int k = 0; k < 5; ++k) mean[r.epoch][k] += v[k];
    ++count[r.epoch];
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::array<bool, 5> drawn{};
  for (int e = 0; e < epochs; ++e)
    for (int k = 0; k < 5; ++k) {
      if (count[e]) mean[e][k] /= count[e];
      if (mean[e][k] > 0 && std::isfinite(mean[e][k])) {
        drawn[k] = true;
        lo = std::min(lo, std::log10(mean[e][k]));
        hi = std::max(hi, std::log10(mean[e][k]));
      }
    }
  require(std::isfinite(lo), "invalid_argument", "loss curve has no positive values");
  lo = std::floor(lo);
  hi = std::max(std::ceil(hi), lo + 1);

  const int left = 40, right = width - 20, top = 20, bottom = height - 30;
  plot_detail::Canvas cv(height, width);
  auto ypix = [&](double v) { return static_cast<int>(std::lround(bottom - (std::log10(v) - lo) / (hi - lo) * (bottom - top))); };
  auto xpix = [&](int e) {
    return epochs == 1 ? (left + right) / 2 : left + static_cast<int>(std::lround(double(e) / (epochs - 1) * (right - left)));
  };
  for (double d = lo; d <= hi + 1e-9; d += 1) {
    const int y = ypix(std::pow(10.0, d));
    cv.line(left, y, right, y, Rgb{220, 220, 220});
  }
  cv.line(left, top, left, bottom, Rgb{0, 0, 0});
  cv.line(left, bottom, right, bottom, Rgb{0, 0, 0});

  const Rgb colours[5] = {{0, 0, 0}, {31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}};
  int legend_y = top + 4;
  for (int k = 0; k < 5; ++k) {
    if (!drawn[k]) continue;
    int px = -1, py = -1;
    for (int e = 0; e < epochs; ++e) {
      const double v = mean[e][k];
      if (!(v > 0) || !std::isfinite(v)) {
        px = -1;
        continue;
      }
      const int x = xpix(e), y = ypix(v);
      if (px >= 0) cv.line(px, py, x, y, colours[k]);
      cv.rect(x - 1, y - 1, x + 1, y + 1, colours[k]);
      px = x;
      py = y;
    }
    cv.rect(right - 14, legend_y, right - 4, legend_y + 6, colours[k]);
    legend_y += 10;
  }
  write_png_bytes(path, cv.px, height, width, 3);
}

}  // namespace fsvt
