#pragma once

// Procedural try-on samples with known deformation fields, plus the shift/zoom
// person augmentation used for robustness evaluation.
//
// A sample is built from one smooth map T taking person pixels to garment-frame
// locations: T(p) = c + R(rot) (p - c) / scale + t + waves(p). The garment is
// drawn flat in its own (canonical) frame; every body part is drawn in the same
// canonical frame, so the person is the canonical figure pulled through T and
// gt_flow(p) = T(p) - p.

#include <array>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fsvt/image_io.hpp"
#include "fsvt/warp.hpp"

namespace fsvt {

struct Wave {
  double amp_x = 0, amp_y = 0;  // pixels
  double kx = 0, ky = 0;        // cycles per pixel
  double phase_x = 0, phase_y = 0;
};

struct Deformation {
  double rotation = 0;  // radians
  double scale = 1;     // apparent garment scale in the person frame
  double tx = 0, ty = 0;
  std::vector<Wave> waves;

  static Deformation translation(double tx, double ty) {
    Deformation d;
    d.tx = tx;
    d.ty = ty;
    return d;
  }

  std::array<double, 2> map(double x, double y, double cx, double cy) const {
    const double c = std::cos(rotation) / scale, s = std::sin(rotation) / scale;
    const double px = x - cx, py = y - cy;
    double qx = cx + c * px - s * py + tx, qy = cy + s * px + c * py + ty;
    for (const auto& w : waves) {
      const double arg = 2 * std::numbers::pi * (w.kx * x + w.ky * y);
      qx += w.amp_x * std::sin(arg + w.phase_x);
      qy += w.amp_y * std::sin(arg + w.phase_y);
    }
    return {qx, qy};
  }

  // Person-frame point whose image under map() is (qx, qy).
  std::array<double, 2> inverse(double qx, double qy, double cx, double cy) const {
    const double c = std::cos(rotation) * scale, s = std::sin(rotation) * scale;
    auto affine_inv = [&](double ax, double ay) {
      const double rx = ax - cx - tx, ry = ay - cy - ty;
      return std::array<double, 2>{cx + c * rx + s * ry, cy - s * rx + c * ry};
    };
    auto p = affine_inv(qx, qy);
    for (int it = 0; it < 100; ++it) {
      double wx = 0, wy = 0;
      for (const auto& w : waves) {
        const double arg = 2 * std::numbers::pi * (w.kx * p[0] + w.ky * p[1]);
        wx += w.amp_x * std::sin(arg + w.phase_x);
        wy += w.amp_y * std::sin(arg + w.phase_y);
      }
      p = affine_inv(qx - wx, qy - wy);
    }
    return p;
  }
};

struct DataConfig {
  int height = 64;
  int width = 48;
  int levels = 5;  // pyramid depth the data must support
  double max_rotation_deg = 15;
  double min_scale = 0.8, max_scale = 1.2;
  double max_translation = 0.2;  // fraction of the frame
  double wave_amplitude = 3;     // pixels, both octaves combined
  double keypoint_sigma = 1.5;
  std::optional<Deformation> fixed_deformation;  // bypasses random sampling

  // Both dimensions must be multiples of 2^(levels-1) and at least 2^levels,
  // so every pyramid level above the deepest halves exactly.
  void validate() const {
    require(levels >= 1 && levels <= 8, "invalid_config", "levels must be in [1, 8]");
    const int step = 1 << (levels - 1);
    require(height % step == 0 && width % step == 0 && height >= 2 * step && width >= 2 * step, "invalid_config",
            "resolution " + std::to_string(height) + "x" + std::to_string(width) +
                " incompatible with " + std::to_string(levels) + " pyramid levels");
    require(min_scale > 0 && min_scale <= max_scale, "invalid_config", "bad scale range");
    require(wave_amplitude >= 0 && max_translation >= 0, "invalid_config", "negative deformation bound");
  }
};

enum class SegClass : int { background = 0, body = 1, head = 2, garment = 3 };
inline constexpr int kSegClasses = 4;
inline constexpr int kKeypoints = 6;  // head, l/r shoulder, l/r hip, torso centre
inline constexpr int kSemanticChannels = kSegClasses + kKeypoints + 2;

struct SemanticMaps {
  Tensor<float> segmentation;  // (4, H, W) one-hot; garment pixels are labelled background
  Tensor<float> keypoints;     // (K, H, W) heatmaps in [0, 1]
  Tensor<float> densebody;     // (2, H, W) canonical body coordinates in [-1, 1], 0 off-body
  std::vector<std::array<float, 2>> keypoint_xy;

  // Teacher person input: segmentation, keypoints, densebody stacked in that order.
  Tensor<float> stacked() const {
    const int H = segmentation.height(), W = segmentation.width();
    Tensor<float> out(Shape{kSemanticChannels, H, W});
    auto put = [&](const Tensor<float>& t, int offset) {
      std::copy(t.values().begin(), t.values().end(), out.data() + static_cast<std::size_t>(offset) * H * W);
    };
    put(segmentation, 0);
    put(keypoints, kSegClasses);
    put(densebody, kSegClasses + kKeypoints);
    return out;
  }
};

struct SyntheticSample {
  Image person;              // (3, H, W)
  Image garment;             // (3, H, W), canonical flat garment on a 0-valued canvas
  Tensor<float> garment_mask;  // (1, H, W), values in {0, 1}
  FlowField<float> gt_flow;
  SemanticMaps semantics;
  std::uint64_t seed = 0;

  int height() const { return person.height(); }
  int width() const { return person.width(); }
  double mask_fraction() const {
    double s = 0;
    for (float v : garment_mask.values()) s += v;
    return s / garment_mask.size();
  }
};

namespace synth_detail {

struct Canonical {
  double cx, cy, W, H;
  double u(double x) const { return (x - cx) / W; }
  double v(double y) const { return (y - cy) / H; }
};

inline bool in_garment(double u, double v) {
  if ((u / 0.09) * (u / 0.09) + ((v + 0.20) / 0.05) * ((v + 0.20) / 0.05) < 1) return false;  // neckline
  if (std::abs(u) <= 0.21 && v >= -0.20 && v <= 0.24) return true;
  const double a = std::abs(u) - 0.21;  // distance beyond the torso side
  return a > 0 && a <= 0.14 && v >= -0.20 + 0.8 * a && v <= -0.05 + 0.8 * a;
}

inline bool in_head(double u, double v) {
  return (u / 0.13) * (u / 0.13) + ((v + 0.34) / 0.09) * ((v + 0.34) / 0.09) <= 1;
}

inline bool in_body(double u, double v) {
  if (std::abs(u) <= 0.19 && v >= -0.20 && v <= 0.26) return true;                         // torso
  if (std::abs(u) <= 0.19 && v > 0.26 && v <= 0.5 && !(std::abs(u) < 0.02 && v > 0.36)) return true;  // legs
  if (std::abs(u) <= 0.06 && v >= -0.27 && v < -0.20) return true;                          // neck
  if (v >= -0.2 && v <= 0.28) {                                                             // arms
    const double centre = 0.27 + 0.15 * (v + 0.2);
    if (std::abs(std::abs(u) - centre) <= 0.055) return true;
  }
  return false;
}

inline bool is_legs(double u, double v) { return std::abs(u) <= 0.19 && v > 0.26; }

struct Appearance {
  std::array<double, 3> base, grad_u, grad_v, wave_amp;
  double wave_k, wave_phase;
  bool stripes;
  std::array<double, 3> stripe_amp;
  double stripe_period, stripe_angle;
  std::array<double, 3> skin, legs, hair, background;
};

template <class Rng>
Appearance sample_appearance(Rng& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  Appearance a{};
  do {
    for (auto& c : a.base) c = u(-0.7, 0.8);
  } while (std::max({std::abs(a.base[0]), std::abs(a.base[1]), std::abs(a.base[2])}) < 0.45);
  for (int c = 0; c < 3; ++c) {
    a.grad_u[c] = u(-0.6, 0.6);
    a.grad_v[c] = u(-0.6, 0.6);
    a.wave_amp[c] = u(-0.2, 0.2);
  }
  a.wave_k = u(1.0, 2.5);
  a.wave_phase = u(0, 2 * std::numbers::pi);
  a.stripes = U(rng) < 0.5;
  for (auto& c : a.stripe_amp) c = u(-0.3, 0.3);
  a.stripe_period = u(5, 10);
  a.stripe_angle = u(0, std::numbers::pi);
  const double tone = u(0.1, 0.7);
  a.skin = {tone, tone * 0.75 - 0.05, tone * 0.6 - 0.15};
  for (auto& c : a.legs) c = u(-0.6, 0.2);
  const double h = u(-0.9, -0.5);
  a.hair = {h, h, h + 0.05};
  const double g = u(-0.7, -0.2);
  a.background = {g + u(-0.05, 0.05), g + u(-0.05, 0.05), g + u(-0.05, 0.05)};
  return a;
}

inline double garment_texture(const Appearance& a, int c, double u, double v, double x, double y) {
  double t = a.base[c] + a.grad_u[c] * u * 2 + a.grad_v[c] * v * 2 +
             a.wave_amp[c] * std::sin(2 * std::numbers::pi * a.wave_k * (u + 0.7 * v) + a.wave_phase);
  if (a.stripes) {
    const double d = x * std::cos(a.stripe_angle) + y * std::sin(a.stripe_angle);
    t += a.stripe_amp[c] * std::sin(2 * std::numbers::pi * d / a.stripe_period);
  }
  return std::clamp(t, -0.95, 0.95);
}

template <class Rng>
Deformation sample_deformation(const DataConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  Deformation d;
  d.rotation = u(-1, 1) * cfg.max_rotation_deg * std::numbers::pi / 180;
  d.scale = u(cfg.min_scale, cfg.max_scale);
  d.tx = u(-1, 1) * cfg.max_translation * cfg.width;
  d.ty = u(-1, 1) * cfg.max_translation * cfg.height;
  // Two octaves (1 and 2 cycles per frame), amplitudes 2/3 and 1/3 of the bound.
  for (int octave = 1; octave <= 2; ++octave) {
    const double amp = cfg.wave_amplitude * (octave == 1 ? 2.0 / 3.0 : 1.0 / 3.0);
    const double ang = u(0, 2 * std::numbers::pi);
    Wave w;
    w.amp_x = amp * u(0.3, 1.0) / std::sqrt(2.0);
    w.amp_y = amp * u(0.3, 1.0) / std::sqrt(2.0);
    w.kx = octave * std::cos(ang) / cfg.width;
    w.ky = octave * std::sin(ang) / cfg.height;
    w.phase_x = u(0, 2 * std::numbers::pi);
    w.phase_y = u(0, 2 * std::numbers::pi);
    d.waves.push_back(w);
  }
  return d;
}

inline double min_jacobian(const Deformation& d, int H, int W) {
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0, h = 0.25;
  double m = std::numeric_limits<double>::infinity();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto xp = d.map(x + h, y, cx, cy), xm = d.map(x - h, y, cx, cy);
      const auto yp = d.map(x, y + h, cx, cy), ym = d.map(x, y - h, cx, cy);
      const double a = (xp[0] - xm[0]) / (2 * h), b = (yp[0] - ym[0]) / (2 * h);
      const double c = (xp[1] - xm[1]) / (2 * h), e = (yp[1] - ym[1]) / (2 * h);
      m = std::min(m, a * e - b * c);
    }
  return m;
}

}  // namespace synth_detail

inline Tensor<float> keypoint_heatmaps(const std::vector<std::array<float, 2>>& pts, int H, int W, double sigma) {
  Tensor<float> hm(Shape{static_cast<int>(pts.size()), H, W});
  for (std::size_t k = 0; k < pts.size(); ++k)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double dx = x - pts[k][0], dy = y - pts[k][1];
        hm.at(static_cast<int>(k), y, x) = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
      }
  return hm;
}

// Renders the sample for a given appearance and deformation.
inline SyntheticSample render_sample(const DataConfig& cfg, const synth_detail::Appearance& app, const Deformation& def,
                                     std::uint64_t seed) {
  using namespace synth_detail;
  const int H = cfg.height, W = cfg.width;
  const Canonical can{(W - 1) / 2.0, (H - 1) / 2.0, static_cast<double>(W), static_cast<double>(H)};

  // Canonical garment with 4x4 supersampled coverage.
  Image garment(Shape{3, H, W});
  Tensor<float> alpha(Shape{1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx)
          hits += in_garment(can.u(x - 0.375 + 0.25 * sx), can.v(y - 0.375 + 0.25 * sy));
      const double a = hits / 16.0;
      alpha.at(0, y, x) = static_cast<float>(a);
      for (int c = 0; c < 3; ++c)
        garment.at(c, y, x) = static_cast<float>(a * garment_texture(app, c, can.u(x), can.v(y), x, y));
    }

  FlowField<float> flow(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto q = def.map(x, y, can.cx, can.cy);
      flow.dx(y, x) = static_cast<float>(q[0] - x);
      flow.dy(y, x) = static_cast<float>(q[1] - y);
    }

  const Image warped = warp(garment, flow);
  const Tensor<float> warped_alpha = warp(alpha, flow);

  SyntheticSample s;
  s.seed = seed;
  s.garment = garment;
  s.gt_flow = flow;
  s.person = Image(Shape{3, H, W});
  s.garment_mask = Tensor<float>(Shape{1, H, W});
  auto& sem = s.semantics;
  sem.segmentation = Tensor<float>(Shape{kSegClasses, H, W});
  sem.densebody = Tensor<float>(Shape{2, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double qx = x + flow.dx(y, x), qy = y + flow.dy(y, x);
      const double u = can.u(qx), v = can.v(qy);
      const bool garment_px = warped_alpha.at(0, y, x) >= 0.5f;
      const bool head = in_head(u, v), body = in_body(u, v);
      SegClass cls = SegClass::background;
      std::array<double, 3> col = app.background;
      if (garment_px) {
        s.garment_mask.at(0, y, x) = 1;
        for (int c = 0; c < 3; ++c) s.person.at(c, y, x) = warped.at(c, y, x);
      } else if (head) {
        cls = SegClass::head;
        col = (v < -0.37) ? app.hair : app.skin;
      } else if (body) {
        cls = SegClass::body;
        col = is_legs(u, v) ? app.legs : app.skin;
        for (auto& c : col) c += 0.1 * u;
      }
      if (!garment_px)
        for (int c = 0; c < 3; ++c) s.person.at(c, y, x) = static_cast<float>(std::clamp(col[c], -1.0, 1.0));
      // Garment pixels are relabelled background for the parser-based input.
      sem.segmentation.at(static_cast<int>(cls), y, x) = 1;
      if (garment_px || head || body) {
        sem.densebody.at(0, y, x) = static_cast<float>(std::clamp(2 * u, -1.0, 1.0));
        sem.densebody.at(1, y, x) = static_cast<float>(std::clamp(2 * v, -1.0, 1.0));
      }
    }

  const std::array<std::array<double, 2>, kKeypoints> canon_kp = {
      {{0, -0.34}, {-0.2, -0.19}, {0.2, -0.19}, {-0.16, 0.24}, {0.16, 0.24}, {0, 0.02}}};
  for (const auto& kp : canon_kp) {
    const auto p = def.inverse(can.cx + kp[0] * W, can.cy + kp[1] * H, can.cx, can.cy);
    sem.keypoint_xy.push_back({static_cast<float>(p[0]), static_cast<float>(p[1])});
  }
  sem.keypoints = keypoint_heatmaps(sem.keypoint_xy, H, W, cfg.keypoint_sigma);
  return s;
}

// Deterministic in (seed, cfg). Resamples degenerate deformations (Jacobian
// determinant <= 0 somewhere) and garments covering outside [10%, 60%] of the
// frame; fails after 100 attempts.
inline SyntheticSample gen_sample(std::uint64_t seed, const DataConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x5a));
  const auto app = synth_detail::sample_appearance(rng);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Deformation def = cfg.fixed_deformation ? *cfg.fixed_deformation : synth_detail::sample_deformation(cfg, rng);
    if (synth_detail::min_jacobian(def, cfg.height, cfg.width) <= 0) continue;
    SyntheticSample s = render_sample(cfg, app, def, seed);
    const double frac = s.mask_fraction();
    if (frac < 0.10 || frac > 0.60) continue;
    return s;
  }
  throw Error("degenerate_deformation", "no valid deformation after 100 attempts for seed " + std::to_string(seed));
}

// ----- person augmentation ----------------------------------------------------

struct AugmentSpec {
  enum class Mode { none, shift, zoom };
  Mode mode = Mode::none;
  double dx = 0, dy = 0;  // shift in pixels (content moves by +dx, +dy)
  double zoom = 1;        // >1 enlarges about the frame centre

  static AugmentSpec none() { return {}; }
  static AugmentSpec shift(double dx, double dy) { return {Mode::shift, dx, dy, 1}; }
  static AugmentSpec zoomed(double z) { return {Mode::zoom, 0, 0, z}; }

  void validate(int H, int W) const {
    require(zoom >= 0.5 && zoom <= 2.0, "invalid_augment", "zoom factor must lie in [0.5, 2]");
    require(std::abs(dx) <= W / 3.0 && std::abs(dy) <= H / 3.0, "invalid_augment",
            "shift exceeds a third of the frame");
  }

  // Original-frame location shown at augmented pixel (x, y).
  std::array<double, 2> source(double x, double y, int H, int W) const {
    switch (mode) {
      case Mode::shift:
        return {x - dx, y - dy};
      case Mode::zoom: {
        const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
        return {cx + (x - cx) / zoom, cy + (y - cy) / zoom};
      }
      case Mode::none:
        break;
    }
    return {x, y};
  }

  std::array<double, 2> forward(double x, double y, int H, int W) const {
    switch (mode) {
      case Mode::shift:
        return {x + dx, y + dy};
      case Mode::zoom: {
        const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
        return {cx + (x - cx) * zoom, cy + (y - cy) * zoom};
      }
      case Mode::none:
        break;
    }
    return {x, y};
  }

  std::string mode_name() const { return mode == Mode::shift ? "shift" : mode == Mode::zoom ? "zoom" : "none"; }
  static Mode parse_mode(const std::string& s) {
    if (s == "none") return Mode::none;
    if (s == "shift") return Mode::shift;
    if (s == "zoom") return Mode::zoom;
    throw Error("invalid_augment", "unknown augment mode '" + s + "'");
  }
  bool operator==(const AugmentSpec&) const = default;
};

enum class Resample { bilinear, nearest };

// Resamples every channel of t through the augmentation; locations outside the
// original frame take fill[c].
inline Tensor<float> augment_raster(const Tensor<float>& t, const AugmentSpec& spec, const std::vector<float>& fill,
                                    Resample mode = Resample::bilinear) {
  if (spec.mode == AugmentSpec::Mode::none) return t;
  const int C = t.channels(), H = t.height(), W = t.width();
  require(static_cast<int>(fill.size()) == C, "shape_mismatch", "augment_raster: fill size");
  Tensor<float> out(t.shape());
  constexpr double tol = 1e-9;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto s = spec.source(x, y, H, W);
      if (s[0] < -tol || s[0] > W - 1 + tol || s[1] < -tol || s[1] > H - 1 + tol) {
        for (int c = 0; c < C; ++c) out.at(c, y, x) = fill[c];
        continue;
      }
      if (mode == Resample::nearest) {
        const int sx = std::clamp(static_cast<int>(std::lround(s[0])), 0, W - 1);
        const int sy = std::clamp(static_cast<int>(std::lround(s[1])), 0, H - 1);
        for (int c = 0; c < C; ++c) out.at(c, y, x) = t.at(c, sy, sx);
        continue;
      }
      const auto tx = detail::axis_tap(s[0], W), ty = detail::axis_tap(s[1], H);
      const float ax = static_cast<float>(tx.a), ay = static_cast<float>(ty.a);
      for (int c = 0; c < C; ++c)
        out.at(c, y, x) = (1 - ay) * ((1 - ax) * t.at(c, ty.i0, tx.i0) + ax * t.at(c, ty.i0, tx.i1)) +
                          ay * ((1 - ax) * t.at(c, ty.i1, tx.i0) + ax * t.at(c, ty.i1, tx.i1));
    }
  return out;
}

// Composes the augmentation with a ground-truth flow: the augmented pixel x
// shows original location s(x), so its garment location is s(x) + flow(s(x)).
inline FlowField<float> augment_flow(const FlowField<float>& flow, const AugmentSpec& spec) {
  if (spec.mode == AugmentSpec::Mode::none) return flow;
  const int H = flow.height(), W = flow.width();
  FlowField<float> out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto s = spec.source(x, y, H, W);
      const auto tx = detail::axis_tap(s[0], W), ty = detail::axis_tap(s[1], H);
      const double ax = tx.a, ay = ty.a;
      for (int c = 0; c < 2; ++c) {
        const auto& f = flow.tensor();
        const double v = (1 - ay) * ((1 - ax) * f.at(c, ty.i0, tx.i0) + ax * f.at(c, ty.i0, tx.i1)) +
                         ay * ((1 - ax) * f.at(c, ty.i1, tx.i0) + ax * f.at(c, ty.i1, tx.i1));
        out.tensor().at(c, y, x) = static_cast<float>(v + (s[c] - (c == 0 ? x : y)));
      }
    }
  return out;
}

inline std::pair<Image, FlowField<float>> augment_person(const Image& img, const FlowField<float>& flow_gt,
                                                         const AugmentSpec& spec) {
  require(img.height() == flow_gt.height() && img.width() == flow_gt.width(), "shape_mismatch",
          "augment_person: image and flow sizes differ");
  spec.validate(img.height(), img.width());
  return {augment_raster(img, spec, std::vector<float>(img.channels(), -1.0f)), augment_flow(flow_gt, spec)};
}

// Applies the augmentation to everything tied to the person frame; the garment
// is untouched.
inline SyntheticSample augment_sample(const SyntheticSample& s, const AugmentSpec& spec) {
  if (spec.mode == AugmentSpec::Mode::none) return s;
  SyntheticSample out = s;
  const int H = s.height(), W = s.width();
  std::tie(out.person, out.gt_flow) = augment_person(s.person, s.gt_flow, spec);
  out.garment_mask = augment_raster(s.garment_mask, spec, {0.0f});
  for (auto& v : out.garment_mask.values()) v = v >= 0.5f ? 1.0f : 0.0f;
  std::vector<float> bg(kSegClasses, 0.0f);
  bg[static_cast<int>(SegClass::background)] = 1;
  out.semantics.segmentation = augment_raster(s.semantics.segmentation, spec, bg, Resample::nearest);
  out.semantics.keypoints = augment_raster(s.semantics.keypoints, spec, std::vector<float>(kKeypoints, 0.0f));
  out.semantics.densebody = augment_raster(s.semantics.densebody, spec, {0.0f, 0.0f});
  for (auto& kp : out.semantics.keypoint_xy) {
    const auto p = spec.forward(kp[0], kp[1], H, W);
    kp = {static_cast<float>(p[0]), static_cast<float>(p[1])};
  }
  return out;
}

// Random augmentation of the given mode: shifts move the person by 1/8 to 1/4
// of the frame width horizontally and up to 1/4 of the width vertically; zooms
// scale by 0.8-0.9 or 1.1-1.25.
template <class Rng>
AugmentSpec random_augment(AugmentSpec::Mode mode, Rng& rng, int H, int W) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  switch (mode) {
    case AugmentSpec::Mode::shift: {
      const double mag = W / 8.0 + U(rng) * (W / 4.0 - W / 8.0);
      const double dx = std::round(U(rng) < 0.5 ? -mag : mag);
      const double lim = std::min(W / 4.0, H / 3.0);
      const double dy = std::round((2 * U(rng) - 1) * lim);
      return AugmentSpec::shift(dx, dy);
    }
    case AugmentSpec::Mode::zoom: {
      const double z = U(rng) < 0.5 ? 0.8 + 0.1 * U(rng) : 1.1 + 0.15 * U(rng);
      return AugmentSpec::zoomed(z);
    }
    case AugmentSpec::Mode::none:
      break;
  }
  return AugmentSpec::none();
}

// Positional augmentation plan for n test items: floor(n/3) shifted,
// floor(n/3) zoomed, the rest unchanged, assigned by a seeded permutation.
inline std::vector<AugmentSpec> eval_augment_plan(std::size_t n, std::uint64_t seed, int H, int W) {
  require(n >= 3, "invalid_argument", "evaluation split needs at least 3 samples");
  std::mt19937_64 rng(derive_seed(seed, 0xe5));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<AugmentSpec> plan(n);
  const std::size_t third = n / 3;
  for (std::size_t r = 0; r < n; ++r) {
    const auto mode = r < third ? AugmentSpec::Mode::shift : r < 2 * third ? AugmentSpec::Mode::zoom : AugmentSpec::Mode::none;
    plan[perm[r]] = random_augment(mode, rng, H, W);
  }
  return plan;
}

inline std::vector<std::pair<SyntheticSample, AugmentSpec>> make_eval_split(const std::vector<SyntheticSample>& samples,
                                                                          std::uint64_t seed) {
  require(samples.size() >= 3, "invalid_argument", "evaluation split needs at least 3 samples");
  const auto plan = eval_augment_plan(samples.size(), seed, samples[0].height(), samples[0].width());
  std::vector<std::pair<SyntheticSample, AugmentSpec>> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.emplace_back(samples[i], plan[i]);
  return out;
}

}  // namespace fsvt
